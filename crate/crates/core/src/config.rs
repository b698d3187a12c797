//! Engine-wide parameters. Everything here is captured in the first line of
//! every session log, so a log carries what is needed to re-run it.

use serde::{Deserialize, Serialize};

use crate::calibration::{CalibrationConfig, Thresholds};
use crate::controller::ControllerConfig;
use crate::error::{Error, Result};
use crate::pipeline::PipelineConfig;
use crate::synth::PlayerParams;

/// Phase lengths and stimulus cadences of the experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolConfig {
    pub familiarization_s: f64,
    pub control_s: f64,
    pub control_interval_s: f64,
    pub calibration_low_s: f64,
    pub calibration_high_s: f64,
    pub calibration_high_interval_s: f64,
    pub dda_s: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            familiarization_s: 180.0,
            control_s: 360.0,
            control_interval_s: 15.0,
            calibration_low_s: 180.0,
            calibration_high_s: 180.0,
            calibration_high_interval_s: 5.0,
            dda_s: 360.0,
        }
    }
}

/// Which phases a session runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum SessionMode {
    /// Familiarization, then the control block and the calibrated DDA block
    /// in seeded order.
    Protocol,
    /// A single DDA phase with preset thresholds.
    DdaOnly { duration_s: f64 },
    /// A single fixed-schedule phase.
    Fixed { interval_s: f64, duration_s: f64 },
    /// The two calibration phases only.
    Calibrate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub pipeline: PipelineConfig,
    pub calibration: CalibrationConfig,
    pub controller: ControllerConfig,
    pub protocol: ProtocolConfig,
    pub player: PlayerParams,
    pub mode: SessionMode,
    /// Used by DDA when no calibration runs in the session.
    pub thresholds: Option<Thresholds>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            calibration: CalibrationConfig::default(),
            controller: ControllerConfig::default(),
            protocol: ProtocolConfig::default(),
            player: PlayerParams::default(),
            mode: SessionMode::Protocol,
            thresholds: None,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        self.player.validate()?;
        if !(self.controller.debounce_seconds >= 0.0 && self.controller.cooldown_seconds >= 0.0) {
            return Err(Error::InvalidConfig(
                "controller timings must be non-negative".into(),
            ));
        }
        if !(self.calibration.skip_seconds >= 0.0 && self.calibration.margin >= 0.0) {
            return Err(Error::InvalidConfig(
                "calibration skip and margin must be non-negative".into(),
            ));
        }
        if let Some(th) = self.thresholds {
            Thresholds::new(th.low, th.high)?;
        }
        if matches!(self.mode, SessionMode::DdaOnly { .. }) && self.thresholds.is_none() {
            return Err(Error::InvalidConfig(
                "dda-only sessions need thresholds".into(),
            ));
        }
        Ok(())
    }
}
