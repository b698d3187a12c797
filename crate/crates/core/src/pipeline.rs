//! Sample-to-TEI processing chain: buffering, spectral analysis, artifact
//! rejection and smoothing.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engagement::{compute_tei, SmootherConfig, TeiPoint, TeiTracker};
use crate::error::{Error, Result};
use crate::signal::{
    artifact_check, band_power, frontal_band_powers, ArtifactStatus, BandDefinition, BandPowers,
    ChannelConfig, EegSample, Epoch, StreamBuffer, WelchEstimator, WindowConfig,
    DEFAULT_ARTIFACT_LIMIT_UV,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub channels: ChannelConfig,
    pub window: WindowConfig,
    pub artifact_limit_uv: f64,
    pub smoother: SmootherConfig,
    pub bands: Vec<BandDefinition>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            channels: ChannelConfig::default(),
            window: WindowConfig::default(),
            artifact_limit_uv: DEFAULT_ARTIFACT_LIMIT_UV,
            smoother: SmootherConfig::default(),
            bands: BandDefinition::DEFAULTS.to_vec(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.channels.validate()?;
        let fs = self.channels.sample_rate_hz;
        let w = self.window.window_len(fs)?;
        let h = self.window.hop_len(fs)?;
        if h > w {
            return Err(Error::InvalidConfig("hop longer than window".into()));
        }
        if !(self.artifact_limit_uv > 0.0) {
            return Err(Error::InvalidConfig(
                "artifact limit must be positive".into(),
            ));
        }
        if !(self.smoother.tau_seconds > 0.0) {
            return Err(Error::InvalidConfig(
                "smoothing time constant must be positive".into(),
            ));
        }
        let nyquist = fs / 2.0;
        for b in &self.bands {
            if !(b.lo_hz >= 0.0 && b.lo_hz < b.hi_hz && b.hi_hz <= nyquist) {
                return Err(Error::BandOutOfRange {
                    name: b.name.to_string(),
                    lo_hz: b.lo_hz,
                    hi_hz: b.hi_hz,
                    nyquist_hz: nyquist,
                });
            }
        }
        Ok(())
    }

    pub fn hop_seconds(&self) -> f64 {
        self.window.hop_seconds
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PipelineOutput {
    Point {
        point: TeiPoint,
        epoch_start: f64,
    },
    /// The epoch was unusable and there was no earlier value to hold.
    Rejected {
        t: f64,
        epoch_start: f64,
        reason: &'static str,
    },
}

impl PipelineOutput {
    pub fn epoch_start(&self) -> f64 {
        match *self {
            PipelineOutput::Point { epoch_start, .. }
            | PipelineOutput::Rejected { epoch_start, .. } => epoch_start,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    cfg: PipelineConfig,
    buffer: StreamBuffer,
    estimator: WelchEstimator,
    tracker: TeiTracker,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        let buffer = StreamBuffer::new(&cfg.channels, &cfg.window)?;
        let estimator = WelchEstimator::new(cfg.channels.sample_rate_hz);
        let tracker = TeiTracker::new(cfg.smoother);
        Ok(Self {
            cfg,
            buffer,
            estimator,
            tracker,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    /// Frontal-averaged band powers of one epoch.
    pub fn band_powers(&self, e: &Epoch) -> Result<BandPowers> {
        let mut per_channel = BTreeMap::new();
        for name in &self.cfg.channels.frontal {
            let psd = self.estimator.estimate(e.channel(name)?);
            let mut bp = BandPowers::default();
            for def in &self.cfg.bands {
                bp[def.name] = band_power(&psd, def)?;
            }
            per_channel.insert(name.clone(), bp);
        }
        frontal_band_powers(&per_channel, &self.cfg.channels)
    }

    pub fn push_sample(&mut self, s: &EegSample) -> Result<Option<PipelineOutput>> {
        let Some(epoch) = self.buffer.push_sample(s)? else {
            return Ok(None);
        };
        let t = epoch.end_t();
        let epoch_start = epoch.start_t;

        let flagged = artifact_check(
            &epoch,
            &self.cfg.channels.frontal,
            self.cfg.artifact_limit_uv,
        ) == ArtifactStatus::Flagged;
        let reason = if flagged {
            "artifact"
        } else {
            match compute_tei(&self.band_powers(&epoch)?) {
                Ok(raw) => {
                    let point = self.tracker.update_clean(t, raw);
                    return Ok(Some(PipelineOutput::Point { point, epoch_start }));
                }
                Err(Error::DegenerateDenominator) => "dead_signal",
                Err(e) => return Err(e),
            }
        };
        Ok(Some(match self.tracker.hold(t) {
            Some(point) => PipelineOutput::Point { point, epoch_start },
            None => PipelineOutput::Rejected {
                t,
                epoch_start,
                reason,
            },
        }))
    }
}
