//! Raw EEG samples to frontal-averaged band power.
//!
//! Samples are pushed one at a time into a [`StreamBuffer`], which emits a
//! sliding [`Epoch`] every hop. Each frontal channel of an epoch is turned into
//! a Welch [`Psd`], integrated per band and averaged across the frontal set.

mod spectrum;

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use spectrum::{
    band_power, compute_psd, Band, BandDefinition, BandPowers, Psd, WelchEstimator,
};

/// One multichannel sample. Amplitudes are in µV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EegSample {
    /// Seconds since stream start.
    pub t: f64,
    pub ch: Vec<f32>,
}

impl EegSample {
    pub fn new(t: f64, ch: Vec<f32>) -> Self {
        Self { t, ch }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelConfig {
    pub names: Vec<String>,
    /// Channels averaged for the engagement index.
    pub frontal: Vec<String>,
    pub sample_rate_hz: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            names: ["TP9", "Fp1", "Fp2", "TP10"].map(String::from).to_vec(),
            frontal: ["Fp1", "Fp2"].map(String::from).to_vec(),
            sample_rate_hz: 256.0,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "sample rate must be positive, got {}",
                self.sample_rate_hz
            )));
        }
        if self.names.is_empty() {
            return Err(Error::InvalidConfig("no channels configured".into()));
        }
        if self.frontal.is_empty() {
            return Err(Error::InvalidConfig("frontal channel set is empty".into()));
        }
        for f in &self.frontal {
            if !self.names.contains(f) {
                return Err(Error::UnknownChannel(f.clone()));
            }
        }
        Ok(())
    }

    pub fn channel_count(&self) -> usize {
        self.names.len()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownChannel(name.to_string()))
    }

    pub fn frontal_indices(&self) -> Result<Vec<usize>> {
        self.frontal.iter().map(|f| self.index_of(f)).collect()
    }
}

/// Sliding analysis window geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    pub window_seconds: f64,
    pub hop_seconds: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            window_seconds: 2.0,
            hop_seconds: 0.25,
        }
    }
}

fn whole_samples(seconds: f64, fs: f64, what: &str) -> Result<usize> {
    let n = seconds * fs;
    if !(n.is_finite() && n >= 1.0) || (n - n.round()).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "{what} of {seconds} s is not a whole number of samples at {fs} Hz"
        )));
    }
    Ok(n.round() as usize)
}

impl WindowConfig {
    pub fn window_len(&self, fs: f64) -> Result<usize> {
        whole_samples(self.window_seconds, fs, "window")
    }

    pub fn hop_len(&self, fs: f64) -> Result<usize> {
        whole_samples(self.hop_seconds, fs, "hop")
    }
}

/// A fixed-length window of samples, stored per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Epoch {
    pub start_t: f64,
    pub sample_rate_hz: f64,
    pub channels: Arc<[String]>,
    pub samples: Vec<Vec<f64>>,
}

impl Epoch {
    pub fn window_len(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn duration(&self) -> f64 {
        self.window_len() as f64 / self.sample_rate_hz
    }

    /// Time just past the newest sample.
    pub fn end_t(&self) -> f64 {
        self.start_t + self.duration()
    }

    pub fn channel(&self, name: &str) -> Result<&[f64]> {
        let idx = self
            .channels
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::UnknownChannel(name.to_string()))?;
        Ok(&self.samples[idx])
    }
}

/// Accumulates samples and emits overlapping epochs.
#[derive(Debug, Clone)]
pub struct StreamBuffer {
    channels: Arc<[String]>,
    sample_rate_hz: f64,
    window_len: usize,
    hop_len: usize,
    data: Vec<VecDeque<f64>>,
    times: VecDeque<f64>,
    since_emit: usize,
    emitted_any: bool,
    last_t: Option<f64>,
}

impl StreamBuffer {
    pub fn new(cfg: &ChannelConfig, window: &WindowConfig) -> Result<Self> {
        cfg.validate()?;
        let fs = cfg.sample_rate_hz;
        let window_len = window.window_len(fs)?;
        let hop_len = window.hop_len(fs)?;
        if hop_len > window_len {
            return Err(Error::InvalidConfig("hop longer than window".into()));
        }
        Ok(Self {
            channels: cfg.names.clone().into(),
            sample_rate_hz: fs,
            window_len,
            hop_len,
            data: vec![VecDeque::with_capacity(window_len); cfg.channel_count()],
            times: VecDeque::with_capacity(window_len),
            since_emit: 0,
            emitted_any: false,
            last_t: None,
        })
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn hop_len(&self) -> usize {
        self.hop_len
    }

    /// Appends a sample; returns an epoch when one completes.
    pub fn push_sample(&mut self, s: &EegSample) -> Result<Option<Epoch>> {
        if s.ch.len() != self.data.len() {
            return Err(Error::ChannelCountMismatch {
                expected: self.data.len(),
                got: s.ch.len(),
            });
        }
        if !s.t.is_finite() {
            return Err(Error::NonMonotoneTimestamp {
                prev: self.last_t.unwrap_or(f64::NAN),
                t: s.t,
            });
        }
        if let Some(prev) = self.last_t {
            if s.t < prev {
                return Err(Error::NonMonotoneTimestamp { prev, t: s.t });
            }
        }
        self.last_t = Some(s.t);

        if self.times.len() == self.window_len {
            self.times.pop_front();
            for ch in &mut self.data {
                ch.pop_front();
            }
        }
        self.times.push_back(s.t);
        for (buf, &v) in self.data.iter_mut().zip(&s.ch) {
            buf.push_back(f64::from(v));
        }
        self.since_emit += 1;

        if self.times.len() < self.window_len {
            return Ok(None);
        }
        if self.emitted_any && self.since_emit < self.hop_len {
            return Ok(None);
        }
        self.emitted_any = true;
        self.since_emit = 0;
        Ok(Some(Epoch {
            start_t: self.times[0],
            sample_rate_hz: self.sample_rate_hz,
            channels: Arc::clone(&self.channels),
            samples: self
                .data
                .iter()
                .map(|c| c.iter().copied().collect())
                .collect(),
        }))
    }
}

/// Mean of each band across the configured frontal channels.
pub fn frontal_band_powers(
    per_channel: &BTreeMap<String, BandPowers>,
    cfg: &ChannelConfig,
) -> Result<BandPowers> {
    let mut sum = BandPowers::default();
    for name in &cfg.frontal {
        let bp = per_channel
            .get(name)
            .ok_or_else(|| Error::MissingFrontalChannel(name.clone()))?;
        for band in Band::ALL {
            sum[band] += bp[band];
        }
    }
    let n = cfg.frontal.len() as f64;
    for band in Band::ALL {
        sum[band] /= n;
    }
    Ok(sum)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactStatus {
    Clean,
    Flagged,
}

pub const DEFAULT_ARTIFACT_LIMIT_UV: f64 = 150.0;

/// Flags the epoch when any frontal sample exceeds `limit_uv` in magnitude.
pub fn artifact_check(e: &Epoch, frontal: &[String], limit_uv: f64) -> ArtifactStatus {
    let exceeded = frontal
        .iter()
        .filter_map(|name| e.channel(name).ok())
        .flatten()
        .any(|x| x.abs() > limit_uv);
    if exceeded {
        ArtifactStatus::Flagged
    } else {
        ArtifactStatus::Clean
    }
}
