use std::f64::consts::PI;
use std::fmt;
use std::ops::{Index, IndexMut};
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::Epoch;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    Delta,
    Theta,
    Alpha,
    Beta,
    Gamma,
}

impl Band {
    pub const ALL: [Band; 5] = [
        Band::Delta,
        Band::Theta,
        Band::Alpha,
        Band::Beta,
        Band::Gamma,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Band::Delta => "delta",
            Band::Theta => "theta",
            Band::Alpha => "alpha",
            Band::Beta => "beta",
            Band::Gamma => "gamma",
        }
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandDefinition {
    pub name: Band,
    pub lo_hz: f64,
    pub hi_hz: f64,
}

impl BandDefinition {
    pub const fn new(name: Band, lo_hz: f64, hi_hz: f64) -> Self {
        Self { name, lo_hz, hi_hz }
    }

    /// Clinical band edges. Alpha and beta overlap on 12–13 Hz and beta and
    /// gamma share 30 Hz; both overlaps are kept as stated.
    pub const DEFAULTS: [BandDefinition; 5] = [
        BandDefinition::new(Band::Delta, 1.0, 4.0),
        BandDefinition::new(Band::Theta, 5.0, 8.0),
        BandDefinition::new(Band::Alpha, 9.0, 13.0),
        BandDefinition::new(Band::Beta, 12.0, 30.0),
        BandDefinition::new(Band::Gamma, 30.0, 50.0),
    ];

    pub fn default_for(name: Band) -> Self {
        Self::DEFAULTS[name as usize]
    }

    pub fn contains(&self, f: f64) -> bool {
        self.lo_hz <= f && f <= self.hi_hz
    }
}

/// Absolute power per band, µV².
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BandPowers {
    pub delta: f64,
    pub theta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl BandPowers {
    pub fn scaled(mut self, c: f64) -> Self {
        for band in Band::ALL {
            self[band] *= c;
        }
        self
    }

    pub fn is_valid(&self) -> bool {
        Band::ALL
            .iter()
            .all(|&b| self[b].is_finite() && self[b] >= 0.0)
    }
}

impl Index<Band> for BandPowers {
    type Output = f64;

    fn index(&self, band: Band) -> &f64 {
        match band {
            Band::Delta => &self.delta,
            Band::Theta => &self.theta,
            Band::Alpha => &self.alpha,
            Band::Beta => &self.beta,
            Band::Gamma => &self.gamma,
        }
    }
}

impl IndexMut<Band> for BandPowers {
    fn index_mut(&mut self, band: Band) -> &mut f64 {
        match band {
            Band::Delta => &mut self.delta,
            Band::Theta => &mut self.theta,
            Band::Alpha => &mut self.alpha,
            Band::Beta => &mut self.beta,
            Band::Gamma => &mut self.gamma,
        }
    }
}

/// One-sided power spectral density, µV²/Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct Psd {
    pub freqs_hz: Vec<f64>,
    pub power: Vec<f64>,
    pub resolution_hz: f64,
}

impl Psd {
    pub fn nyquist_hz(&self) -> f64 {
        self.freqs_hz.last().copied().unwrap_or(0.0)
    }

    /// Integral of the density over all bins.
    pub fn total_power(&self) -> f64 {
        self.power.iter().sum::<f64>() * self.resolution_hz
    }
}

/// Welch averaged periodogram: de-meaned, Hann-tapered segments with 50%
/// overlap.
#[derive(Clone)]
pub struct WelchEstimator {
    sample_rate_hz: f64,
    segment_len: usize,
    step: usize,
    window: Vec<f64>,
    window_energy: f64,
    fft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for WelchEstimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WelchEstimator")
            .field("sample_rate_hz", &self.sample_rate_hz)
            .field("segment_len", &self.segment_len)
            .field("step", &self.step)
            .finish()
    }
}

impl WelchEstimator {
    pub const SEGMENT_SECONDS: f64 = 1.0;

    pub fn new(sample_rate_hz: f64) -> Self {
        Self::with_segment_len(
            sample_rate_hz,
            (sample_rate_hz * Self::SEGMENT_SECONDS).round() as usize,
        )
    }

    pub fn with_segment_len(sample_rate_hz: f64, segment_len: usize) -> Self {
        let segment_len = segment_len.max(2);
        // periodic Hann: a bin-centred tone leaks into its two neighbours only
        let window: Vec<f64> = (0..segment_len)
            .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / segment_len as f64).cos())
            .collect();
        let window_energy = window.iter().map(|w| w * w).sum();
        let fft = FftPlanner::new().plan_fft_forward(segment_len);
        Self {
            sample_rate_hz,
            segment_len,
            step: (segment_len / 2).max(1),
            window,
            window_energy,
            fft,
        }
    }

    pub fn segment_len(&self) -> usize {
        self.segment_len
    }

    pub fn resolution_hz(&self) -> f64 {
        self.sample_rate_hz / self.segment_len as f64
    }

    /// Signals shorter than one segment are analysed as a single zero-padded
    /// segment.
    pub fn estimate(&self, x: &[f64]) -> Psd {
        let n = self.segment_len;
        let bins = n / 2 + 1;
        let mut power = vec![0.0; bins];
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        let mut segments = 0usize;

        let mut start = 0;
        loop {
            let end = (start + n).min(x.len());
            let seg = &x[start..end];
            let mean = if seg.is_empty() {
                0.0
            } else {
                seg.iter().sum::<f64>() / seg.len() as f64
            };
            for (i, slot) in buf.iter_mut().enumerate() {
                let v = seg.get(i).map_or(0.0, |s| (s - mean) * self.window[i]);
                *slot = Complex::new(v, 0.0);
            }
            self.fft.process(&mut buf);
            let scale = 1.0 / (self.sample_rate_hz * self.window_energy);
            for (k, p) in power.iter_mut().enumerate() {
                let one_sided = if k == 0 || (n.is_multiple_of(2) && k == n / 2) {
                    1.0
                } else {
                    2.0
                };
                *p += one_sided * buf[k].norm_sqr() * scale;
            }
            segments += 1;
            if start + self.step + n > x.len() {
                break;
            }
            start += self.step;
        }

        for p in &mut power {
            *p /= segments as f64;
        }
        let res = self.resolution_hz();
        Psd {
            freqs_hz: (0..bins).map(|k| k as f64 * res).collect(),
            power,
            resolution_hz: res,
        }
    }
}

/// Welch PSD of one named channel of an epoch.
pub fn compute_psd(e: &Epoch, channel: &str) -> Result<Psd> {
    let x = e.channel(channel)?;
    Ok(WelchEstimator::new(e.sample_rate_hz).estimate(x))
}

/// Integrated power over bins whose centre lies in `[lo_hz, hi_hz]`.
pub fn band_power(p: &Psd, band: &BandDefinition) -> Result<f64> {
    let nyquist = p.nyquist_hz();
    if !(band.lo_hz >= 0.0 && band.lo_hz < band.hi_hz && band.hi_hz <= nyquist) {
        return Err(Error::BandOutOfRange {
            name: band.name.to_string(),
            lo_hz: band.lo_hz,
            hi_hz: band.hi_hz,
            nyquist_hz: nyquist,
        });
    }
    let sum: f64 = p
        .freqs_hz
        .iter()
        .zip(&p.power)
        .filter(|(f, _)| band.contains(**f))
        .map(|(_, pw)| pw)
        .sum();
    Ok(sum * p.resolution_hz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const FS: f64 = 256.0;

    fn tone(freq: f64, amp: f64, secs: f64) -> Vec<f64> {
        let n = (secs * FS) as usize;
        (0..n)
            .map(|i| amp * (2.0 * PI * freq * i as f64 / FS).sin())
            .collect()
    }

    /// Untapered periodogram of the whole record by direct DFT.
    fn dft_oracle(x: &[f64]) -> Psd {
        let n = x.len();
        let bins = n / 2 + 1;
        let power = (0..bins)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (j, v) in x.iter().enumerate() {
                    let ang = -2.0 * PI * (k * j) as f64 / n as f64;
                    re += v * ang.cos();
                    im += v * ang.sin();
                }
                let c = if k == 0 || k == n / 2 { 1.0 } else { 2.0 };
                c * (re * re + im * im) / (FS * n as f64)
            })
            .collect();
        let res = FS / n as f64;
        Psd {
            freqs_hz: (0..bins).map(|k| k as f64 * res).collect(),
            power,
            resolution_hz: res,
        }
    }

    fn bands_of(x: &[f64]) -> BandPowers {
        let psd = WelchEstimator::new(FS).estimate(x);
        let mut out = BandPowers::default();
        for def in BandDefinition::DEFAULTS {
            out[def.name] = band_power(&psd, &def).unwrap();
        }
        out
    }

    #[test]
    fn default_band_edges() {
        let edges: Vec<_> = BandDefinition::DEFAULTS
            .iter()
            .map(|b| (b.lo_hz, b.hi_hz))
            .collect();
        assert_eq!(
            edges,
            vec![
                (1.0, 4.0),
                (5.0, 8.0),
                (9.0, 13.0),
                (12.0, 30.0),
                (30.0, 50.0)
            ]
        );
    }

    #[test]
    fn zero_signal_zero_power() {
        let psd = WelchEstimator::new(FS).estimate(&vec![0.0; 512]);
        assert!(psd.power.iter().all(|&p| p == 0.0));
        for def in BandDefinition::DEFAULTS {
            assert_eq!(band_power(&psd, &def).unwrap(), 0.0);
        }
    }

    #[test]
    fn constant_offset_is_removed() {
        let psd = WelchEstimator::new(FS).estimate(&vec![5.0; 512]);
        assert!(psd.power.iter().all(|&p| p.abs() < 1e-20));
    }

    #[test]
    fn ten_hz_tone_matches_oracle() {
        let x = tone(10.0, 1.0, 2.0);
        let oracle = dft_oracle(&x);
        assert_relative_eq!(oracle.total_power(), 0.5, max_relative = 1e-9);

        let psd = WelchEstimator::new(FS).estimate(&x);
        assert_eq!(psd.resolution_hz, 1.0);
        let total = psd.total_power();
        assert_relative_eq!(total, oracle.total_power(), max_relative = 0.05);
        let near: f64 = psd
            .freqs_hz
            .iter()
            .zip(&psd.power)
            .filter(|(f, _)| (**f - 10.0).abs() <= 1.0)
            .map(|(_, p)| p * psd.resolution_hz)
            .sum();
        assert!(near / total >= 0.95, "only {} near 10 Hz", near / total);
    }

    #[test]
    fn ten_hz_tone_lands_in_alpha_only() {
        let bp = bands_of(&tone(10.0, 1.0, 2.0));
        assert_relative_eq!(bp.alpha, 0.5, max_relative = 0.05);
        for b in [Band::Delta, Band::Theta, Band::Beta, Band::Gamma] {
            assert!(bp[b] <= 0.025, "{b} = {}", bp[b]);
        }
    }

    #[test]
    fn overlap_tone_counts_in_alpha_and_beta() {
        let x = tone(12.5, 1.0, 2.0);
        // untapered oracle: 25 whole cycles, one bin at 12.5 Hz
        let oracle = dft_oracle(&x);
        let a = band_power(&oracle, &BandDefinition::default_for(Band::Alpha)).unwrap();
        let b = band_power(&oracle, &BandDefinition::default_for(Band::Beta)).unwrap();
        assert_relative_eq!(a, 0.5, max_relative = 1e-9);
        assert_relative_eq!(b, 0.5, max_relative = 1e-9);

        let bp = bands_of(&x);
        assert_relative_eq!(bp.alpha, a, max_relative = 0.05);
        assert_relative_eq!(bp.beta, b, max_relative = 0.05);
    }

    #[test]
    fn parseval_per_segment() {
        let x: Vec<f64> = (0..256)
            .map(|i| {
                let t = i as f64 / FS;
                3.0 * (2.0 * PI * 7.3 * t).sin() + 1.5 * (2.0 * PI * 21.1 * t + 0.4).cos() + 0.7
            })
            .collect();
        let est = WelchEstimator::new(FS);
        let psd = est.estimate(&x);
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let w: Vec<f64> = (0..256)
            .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / 256.0).cos())
            .collect();
        let tapered: f64 = x
            .iter()
            .zip(&w)
            .map(|(v, w)| ((v - mean) * w).powi(2))
            .sum();
        let energy: f64 = w.iter().map(|w| w * w).sum();
        assert_relative_eq!(psd.total_power(), tapered / energy, max_relative = 1e-6);
    }

    #[test]
    fn band_must_fit_below_nyquist() {
        let psd = WelchEstimator::new(FS).estimate(&vec![0.0; 256]);
        let bad = BandDefinition::new(Band::Gamma, 30.0, 200.0);
        assert!(matches!(
            band_power(&psd, &bad),
            Err(Error::BandOutOfRange { .. })
        ));
        let inverted = BandDefinition::new(Band::Gamma, 40.0, 30.0);
        assert!(band_power(&psd, &inverted).is_err());
    }

    #[test]
    fn band_centre_tones_round_trip() {
        let centres = [
            (Band::Delta, 2.5),
            (Band::Theta, 6.5),
            (Band::Alpha, 11.0),
            (Band::Beta, 21.0),
            (Band::Gamma, 40.0),
        ];
        for (band, f) in centres {
            let amp = 2.0;
            let bp = bands_of(&tone(f, amp, 2.0));
            assert_relative_eq!(bp[band], amp * amp / 2.0, max_relative = 0.05);
        }
    }

    #[test]
    fn unknown_channel() {
        let e = Epoch {
            start_t: 0.0,
            sample_rate_hz: FS,
            channels: vec!["Fp1".to_string()].into(),
            samples: vec![vec![0.0; 512]],
        };
        assert!(compute_psd(&e, "Fp1").is_ok());
        assert!(matches!(
            compute_psd(&e, "Cz"),
            Err(Error::UnknownChannel(_))
        ));
    }
}
