//! Per-user boredom/anxiety thresholds from the idle and stress phases.

use serde::{Deserialize, Serialize};

use crate::engagement::{Quality, TeiPoint};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CalibrationPhase {
    /// Idle, no stimuli: sets the low threshold.
    B1,
    /// Fast stimulus cadence: sets the high threshold.
    B2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseLog {
    pub phase: CalibrationPhase,
    pub start_t: f64,
    pub tei: Vec<TeiPoint>,
}

impl PhaseLog {
    pub fn new(phase: CalibrationPhase, start_t: f64) -> Self {
        Self {
            phase,
            start_t,
            tei: Vec::new(),
        }
    }
}

/// Lower and upper edges of the engaged band, in TEI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub low: f64,
    pub high: f64,
}

impl Thresholds {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(low.is_finite() && high.is_finite() && low >= 0.0 && low < high) {
            return Err(Error::CalibrationInvalid { low, high });
        }
        Ok(Self { low, high })
    }

    pub fn contains(&self, tei: f64) -> bool {
        self.low <= tei && tei <= self.high
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum ThresholdRule {
    Mean,
    /// Linear-interpolated percentile, 0..=100.
    Percentile(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    /// Transient discarded at the start of each phase.
    pub skip_seconds: f64,
    /// Required gap between low and high.
    pub margin: f64,
    pub rule: ThresholdRule,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            skip_seconds: 30.0,
            margin: 0.01,
            rule: ThresholdRule::Mean,
        }
    }
}

pub fn derive_threshold(log: &PhaseLog, cfg: &CalibrationConfig) -> Result<f64> {
    let cutoff = log.start_t + cfg.skip_seconds;
    let retained: Vec<&TeiPoint> = log.tei.iter().filter(|p| p.t >= cutoff).collect();
    if retained.is_empty() {
        return Err(Error::EmptyPhase);
    }
    let mut clean: Vec<f64> = retained
        .iter()
        .filter(|p| p.quality == Quality::Clean)
        .map(|p| p.smoothed)
        .collect();
    if clean.is_empty() {
        return Err(Error::AllFlagged);
    }
    Ok(match cfg.rule {
        ThresholdRule::Mean => clean.iter().sum::<f64>() / clean.len() as f64,
        ThresholdRule::Percentile(pct) => {
            clean.sort_by(f64::total_cmp);
            percentile(&clean, pct)
        }
    })
}

fn percentile(sorted: &[f64], pct: f64) -> f64 {
    let rank = (pct.clamp(0.0, 100.0) / 100.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

pub fn finalize_thresholds(
    b1: &PhaseLog,
    b2: &PhaseLog,
    cfg: &CalibrationConfig,
) -> Result<Thresholds> {
    let low = derive_threshold(b1, cfg)?;
    let high = derive_threshold(b2, cfg)?;
    if !(low >= 0.0 && low < high - cfg.margin) {
        return Err(Error::CalibrationInvalid { low, high });
    }
    Thresholds::new(low, high)
}
