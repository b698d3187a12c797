//! I/O around the engagement engine: TCP sample ingest, the live
//! source/DSP/session stages and the WebSocket telemetry channel.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod ingest;
pub mod live;
pub mod queue;
pub mod telemetry;

pub use error::{GatewayError, Result};
