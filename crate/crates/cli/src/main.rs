//! `engage`: simulate, calibrate, run, replay, analyze and serve sessions of
//! the engagement-driven difficulty engine.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod options;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use engage_gateway::ingest::DEFAULT_INGEST_PORT;
use engage_gateway::telemetry::DEFAULT_TELEMETRY_PORT;

use crate::options::{ConfigArgs, ModeArgs};

#[derive(Debug, Parser)]
#[command(
    name = "engage",
    version,
    about = "EEG engagement index driven difficulty engine"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SourceArg {
    Synth,
    Tcp,
    Replay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ServeSourceArg {
    Synth,
    Tcp,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a session on the synthetic player with a simulated clock.
    Simulate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory receiving session.jsonl and report.json.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        mode: ModeArgs,
    },
    /// Run the two calibration phases only and write thresholds.json.
    Calibrate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Calibrate from a CSV recording instead of the synthetic player.
        #[arg(long, value_name = "CSV")]
        recording: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Run a session on a live or recorded sample source.
    Run {
        #[arg(long, value_enum, default_value_t = SourceArg::Synth)]
        source: SourceArg,
        /// CSV recording read by the replay source.
        #[arg(long, value_name = "CSV", required_if_eq("source", "replay"))]
        recording: Option<PathBuf>,
        /// TCP ingest port; 0 picks a free one.
        #[arg(long, default_value_t = DEFAULT_INGEST_PORT)]
        port: u16,
        /// Pace of the synthetic source relative to real time.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        /// Write every accepted sample to this CSV file.
        #[arg(long, value_name = "CSV")]
        record: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        mode: ModeArgs,
    },
    /// Re-run a CSV recording through the engine.
    Replay {
        recording: PathBuf,
        /// Take configuration, plan and seed from the config line of this
        /// session log.
        #[arg(long, value_name = "JSONL", conflicts_with_all = ["config", "thresholds", "mode", "duration", "interval", "seed"])]
        session: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        mode: ModeArgs,
    },
    /// Compare control and DDA engagement across a directory of session logs.
    Analyze {
        /// Searched recursively for *.jsonl files, one per subject.
        dir: PathBuf,
        /// Directory receiving report.json and report.txt [default: DIR].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Start ingest and telemetry endpoints; the session waits for a start
    /// command.
    Serve {
        #[arg(long, value_enum, default_value_t = ServeSourceArg::Tcp)]
        source: ServeSourceArg,
        #[arg(long, default_value_t = DEFAULT_INGEST_PORT)]
        port: u16,
        #[arg(long, default_value_t = DEFAULT_TELEMETRY_PORT)]
        telemetry_port: u16,
        /// Static files served beside the WebSocket.
        #[arg(long, value_name = "DIR")]
        console_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        #[arg(long, value_name = "CSV")]
        record: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        mode: ModeArgs,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ENGAGE_LOG_LEVEL", "warn"))
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate {
            seed,
            out,
            config,
            mode,
        } => config
            .resolve(&mode)
            .and_then(|cfg| commands::simulate(&cfg, seed, &out)),
        Command::Calibrate {
            seed,
            recording,
            out,
            config,
        } => commands::calibrate(&config, seed, recording.as_deref(), &out),
        Command::Run {
            source,
            recording,
            port,
            speed,
            record,
            seed,
            out,
            config,
            mode,
        } => {
            let live = |src| commands::LiveArgs {
                source: src,
                seed,
                record: record.clone(),
                out: out.clone(),
                telemetry: None,
                autostart: true,
            };
            config.resolve(&mode).and_then(|cfg| match source {
                SourceArg::Replay => {
                    let path = recording
                        .as_deref()
                        .context("--recording is required with --source replay")?;
                    commands::replay(cfg, None, seed, path, &out)
                }
                SourceArg::Synth => {
                    commands::live(cfg, live(commands::LiveSourceArg::Synth { speed }))
                }
                SourceArg::Tcp => commands::live(cfg, live(commands::LiveSourceArg::Tcp { port })),
            })
        }
        Command::Replay {
            recording,
            session,
            seed,
            out,
            config,
            mode,
        } => match session {
            Some(log) => commands::replay_from_log(&log, &recording, &out),
            None => config
                .resolve(&mode)
                .and_then(|cfg| commands::replay(cfg, None, seed, &recording, &out)),
        },
        Command::Analyze { dir, out } => commands::analyze(&dir, out.as_deref().unwrap_or(&dir)),
        Command::Serve {
            source,
            port,
            telemetry_port,
            console_dir,
            speed,
            record,
            seed,
            out,
            config,
            mode,
        } => config.resolve(&mode).and_then(|cfg| {
            let source = match source {
                ServeSourceArg::Synth => commands::LiveSourceArg::Synth { speed },
                ServeSourceArg::Tcp => commands::LiveSourceArg::Tcp { port },
            };
            commands::live(
                cfg,
                commands::LiveArgs {
                    source,
                    seed,
                    record,
                    out,
                    telemetry: Some((telemetry_port, console_dir)),
                    autostart: false,
                },
            )
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", render_chain(&e));
            ExitCode::FAILURE
        }
    }
}

/// `a: b: c`, leaving out causes already quoted by the message above them.
fn render_chain(e: &anyhow::Error) -> String {
    let mut out = String::new();
    let mut prev = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if prev.contains(&msg) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&msg);
        prev = msg;
    }
    out
}
