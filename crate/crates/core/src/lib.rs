//! Closed-loop engagement engine: streamed EEG to a task engagement index,
//! per-user threshold calibration, difficulty control and the statistics used
//! to compare adaptive against fixed-schedule sessions.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod calibration;
pub mod config;
pub mod controller;
pub mod engagement;
pub mod error;
pub mod pipeline;
pub mod recording;
pub mod session;
pub mod signal;
pub mod synth;
pub mod telemetry;

pub use error::{Error, Result};
