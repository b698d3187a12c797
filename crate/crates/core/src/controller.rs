//! Difficulty state machine. Stimulus count is the only difficulty knob.
//!
//! Under DDA the controller holds still while the smoothed TEI is inside the
//! calibrated band, adds one stimulus after a debounced excursion below it and
//! removes one after a debounced excursion above it, never acting twice within
//! the cooldown. The fixed schedule spawns on a timer and never removes.

use serde::{Deserialize, Serialize};

use crate::calibration::Thresholds;
use crate::engagement::TeiPoint;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy")]
pub enum ControlMode {
    /// No stimuli are ever spawned.
    Idle,
    Dda,
    FixedSchedule {
        interval_s: f64,
    },
}

impl ControlMode {
    pub fn label(&self) -> &'static str {
        match self {
            ControlMode::Idle => "idle",
            ControlMode::Dda => "dda",
            ControlMode::FixedSchedule { .. } => "fixed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandSide {
    Below,
    Above,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Excursion {
    pub side: BandSide,
    pub since: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifficultyState {
    pub active_stimuli: u32,
    /// `None` until the first action.
    pub last_action_t: Option<f64>,
    pub out_of_band: Option<Excursion>,
    pub mode: ControlMode,
}

impl DifficultyState {
    pub fn new(mode: ControlMode) -> Self {
        Self {
            active_stimuli: 0,
            last_action_t: None,
            out_of_band: None,
            mode,
        }
    }

    pub fn out_of_band_since(&self) -> Option<f64> {
        self.out_of_band.map(|e| e.since)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DifficultyAction {
    SpawnStimulus,
    RemoveStimulus,
    NoAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    pub debounce_seconds: f64,
    pub cooldown_seconds: f64,
    /// Clear every stimulus on an anxiety excursion instead of one.
    pub remove_all_on_anxiety: bool,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            debounce_seconds: 1.0,
            cooldown_seconds: 5.0,
            remove_all_on_anxiety: false,
        }
    }
}

fn elapsed_since(last: Option<f64>, now: f64) -> f64 {
    last.map_or(f64::INFINITY, |t| now - t)
}

pub fn dda_tick(
    s: &DifficultyState,
    tei: &TeiPoint,
    th: &Thresholds,
    now: f64,
    cfg: &ControllerConfig,
) -> (DifficultyAction, DifficultyState) {
    let mut next = *s;
    let side = if tei.smoothed < th.low {
        BandSide::Below
    } else if tei.smoothed > th.high {
        BandSide::Above
    } else {
        next.out_of_band = None;
        return (DifficultyAction::NoAction, next);
    };

    let since = match s.out_of_band {
        Some(e) if e.side == side => e.since,
        _ => now,
    };
    next.out_of_band = Some(Excursion { side, since });

    let debounced = now - since >= cfg.debounce_seconds;
    let cooled = elapsed_since(s.last_action_t, now) >= cfg.cooldown_seconds;
    if !(debounced && cooled) {
        return (DifficultyAction::NoAction, next);
    }
    match side {
        BandSide::Below => {
            next.active_stimuli += 1;
            next.last_action_t = Some(now);
            (DifficultyAction::SpawnStimulus, next)
        }
        BandSide::Above if s.active_stimuli > 0 => {
            next.active_stimuli = if cfg.remove_all_on_anxiety {
                0
            } else {
                s.active_stimuli - 1
            };
            next.last_action_t = Some(now);
            (DifficultyAction::RemoveStimulus, next)
        }
        BandSide::Above => (DifficultyAction::NoAction, next),
    }
}

pub fn fixed_tick(s: &DifficultyState, now: f64) -> (DifficultyAction, DifficultyState) {
    let ControlMode::FixedSchedule { interval_s } = s.mode else {
        return (DifficultyAction::NoAction, *s);
    };
    if elapsed_since(s.last_action_t, now) >= interval_s {
        let mut next = *s;
        next.active_stimuli += 1;
        next.last_action_t = Some(now);
        (DifficultyAction::SpawnStimulus, next)
    } else {
        (DifficultyAction::NoAction, *s)
    }
}

/// Dispatches on the state's mode. DDA without thresholds holds still.
pub fn tick(
    s: &DifficultyState,
    tei: &TeiPoint,
    th: Option<&Thresholds>,
    now: f64,
    cfg: &ControllerConfig,
) -> (DifficultyAction, DifficultyState) {
    match (s.mode, th) {
        (ControlMode::Dda, Some(th)) => dda_tick(s, tei, th, now, cfg),
        (ControlMode::FixedSchedule { .. }, _) => fixed_tick(s, now),
        _ => (DifficultyAction::NoAction, *s),
    }
}
