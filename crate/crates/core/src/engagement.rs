//! Task Engagement Index: beta / (alpha + theta), with exponential smoothing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::BandPowers;

/// Below this alpha + theta power (µV²) the ratio is meaningless.
pub const MIN_DENOMINATOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quality {
    Clean,
    /// The epoch was rejected; the previous value was carried forward.
    Held,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TeiPoint {
    pub t: f64,
    pub raw: f64,
    pub smoothed: f64,
    pub quality: Quality,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmootherConfig {
    pub tau_seconds: f64,
}

impl Default for SmootherConfig {
    fn default() -> Self {
        Self { tau_seconds: 2.0 }
    }
}

pub fn compute_tei(b: &BandPowers) -> Result<f64> {
    let denom = b.alpha + b.theta;
    if !(denom >= MIN_DENOMINATOR) {
        return Err(Error::DegenerateDenominator);
    }
    Ok(b.beta / denom)
}

/// One step of a first-order low-pass with time constant `tau`.
pub fn smooth_step(prev: &TeiPoint, raw: f64, dt: f64, cfg: &SmootherConfig) -> f64 {
    debug_assert!(dt > 0.0);
    let gain = 1.0 - (-dt / cfg.tau_seconds).exp();
    prev.smoothed + (raw - prev.smoothed) * gain
}

/// Running TEI series: initialises on the first clean value, carries the last
/// value through rejected epochs.
#[derive(Debug, Clone)]
pub struct TeiTracker {
    cfg: SmootherConfig,
    last: Option<TeiPoint>,
}

impl TeiTracker {
    pub fn new(cfg: SmootherConfig) -> Self {
        Self { cfg, last: None }
    }

    pub fn last(&self) -> Option<&TeiPoint> {
        self.last.as_ref()
    }

    pub fn update_clean(&mut self, t: f64, raw: f64) -> TeiPoint {
        let smoothed = match &self.last {
            Some(prev) if t > prev.t => smooth_step(prev, raw, t - prev.t, &self.cfg),
            Some(prev) => prev.smoothed,
            None => raw,
        };
        let p = TeiPoint {
            t,
            raw,
            smoothed,
            quality: Quality::Clean,
        };
        self.last = Some(p);
        p
    }

    /// `None` when nothing has been measured yet.
    pub fn hold(&mut self, t: f64) -> Option<TeiPoint> {
        let prev = self.last?;
        let p = TeiPoint {
            t,
            quality: Quality::Held,
            ..prev
        };
        self.last = Some(p);
        Some(p)
    }
}
