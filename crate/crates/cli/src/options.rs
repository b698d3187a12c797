//! Engine configuration from flags, an optional JSON file and defaults, in
//! that order of precedence.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use engage_core::calibration::Thresholds;
use engage_core::config::{EngineConfig, SessionMode};

#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// JSON engine configuration; omitted fields take their defaults.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Engaged band as `LOW,HIGH` or a thresholds.json written by `calibrate`.
    #[arg(long, value_name = "LOW,HIGH|PATH")]
    pub thresholds: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Protocol,
    DdaOnly,
    Fixed,
}

#[derive(Debug, Clone, Args)]
pub struct ModeArgs {
    /// Phases to run [default: protocol, or the config file's mode].
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,

    /// Length of the single dda-only or fixed phase, in seconds.
    #[arg(long, value_name = "SECONDS")]
    pub duration: Option<f64>,

    /// Spawn interval of the fixed phase, in seconds.
    #[arg(long, value_name = "SECONDS")]
    pub interval: Option<f64>,
}

impl ConfigArgs {
    /// File or defaults, then the thresholds flag. Not validated.
    pub fn base(&self) -> Result<EngineConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read config {}", path.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("invalid config {}", path.display()))?
            }
            None => EngineConfig::default(),
        };
        if let Some(value) = &self.thresholds {
            cfg.thresholds = Some(parse_thresholds(value)?);
        }
        Ok(cfg)
    }

    pub fn resolve(&self, mode: &ModeArgs) -> Result<EngineConfig> {
        let mut cfg = self.base()?;
        mode.apply(&mut cfg)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

impl ModeArgs {
    fn apply(&self, cfg: &mut EngineConfig) -> Result<()> {
        let p = cfg.protocol;
        cfg.mode = match (self.mode, cfg.mode) {
            (Some(ModeArg::Protocol), _) => SessionMode::Protocol,
            (Some(ModeArg::DdaOnly), _) => SessionMode::DdaOnly {
                duration_s: self.duration.unwrap_or(p.dda_s),
            },
            (Some(ModeArg::Fixed), _) => SessionMode::Fixed {
                interval_s: self.interval.unwrap_or(p.control_interval_s),
                duration_s: self.duration.unwrap_or(p.control_s),
            },
            (None, SessionMode::DdaOnly { duration_s }) => SessionMode::DdaOnly {
                duration_s: self.duration.unwrap_or(duration_s),
            },
            (
                None,
                SessionMode::Fixed {
                    interval_s,
                    duration_s,
                },
            ) => SessionMode::Fixed {
                interval_s: self.interval.unwrap_or(interval_s),
                duration_s: self.duration.unwrap_or(duration_s),
            },
            (None, other) => other,
        };
        let single = matches!(
            cfg.mode,
            SessionMode::DdaOnly { .. } | SessionMode::Fixed { .. }
        );
        if self.duration.is_some() && !single {
            bail!("--duration applies to dda-only and fixed modes only");
        }
        if self.interval.is_some() && !matches!(cfg.mode, SessionMode::Fixed { .. }) {
            bail!("--interval applies to fixed mode only");
        }
        match cfg.mode {
            SessionMode::DdaOnly { duration_s } | SessionMode::Fixed { duration_s, .. }
                if !(duration_s > 0.0) =>
            {
                bail!("duration must be positive, got {duration_s}")
            }
            SessionMode::Fixed { interval_s, .. } if !(interval_s > 0.0) => {
                bail!("interval must be positive, got {interval_s}")
            }
            _ => Ok(()),
        }
    }
}

/// `LOW,HIGH` inline, otherwise a JSON file holding `{"low":..,"high":..}`.
pub fn parse_thresholds(value: &str) -> Result<Thresholds> {
    if let Some((lo, hi)) = value.split_once(',') {
        if let (Ok(low), Ok(high)) = (lo.trim().parse::<f64>(), hi.trim().parse::<f64>()) {
            return Ok(Thresholds::new(low, high)?);
        }
    }
    let path = Path::new(value);
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read thresholds {}", path.display()))?;
    let th: Thresholds = serde_json::from_str(&text)
        .with_context(|| format!("invalid thresholds {}", path.display()))?;
    Ok(Thresholds::new(th.low, th.high)?)
}
