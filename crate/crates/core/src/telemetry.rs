//! JSON messages exchanged with the operator console.

use serde::{Deserialize, Serialize};

use crate::calibration::Thresholds;

/// Controller-visible state after one TEI update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryFrame {
    pub t: f64,
    pub tei_raw: f64,
    pub tei: f64,
    pub low: Option<f64>,
    pub high: Option<f64>,
    pub difficulty: u32,
    pub phase: String,
    pub mode: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeRequest {
    Dda,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ControlMessage {
    SetArousal { value: f64 },
    ReleaseArousal,
    SetMode { mode: ModeRequest },
    Start,
    Stop,
    SetThresholds { low: f64, high: f64 },
}

impl ControlMessage {
    /// Parses and range-checks a control message.
    pub fn parse(text: &str) -> Result<Self, String> {
        let msg: ControlMessage = serde_json::from_str(text).map_err(|e| e.to_string())?;
        match msg {
            ControlMessage::SetArousal { value } if !(0.0..=1.0).contains(&value) => {
                Err(format!("arousal {value} outside [0, 1]"))
            }
            ControlMessage::SetThresholds { low, high } => match Thresholds::new(low, high) {
                Ok(_) => Ok(msg),
                Err(_) => Err(format!(
                    "thresholds need 0 <= low < high, got low={low} high={high}"
                )),
            },
            _ => Ok(msg),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Telemetry(TelemetryFrame),
    Error { reason: String },
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages always serialize")
    }
}
