//! Subcommand bodies. Each writes its artifacts under an output directory
//! and prints a short summary on stdout.

use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use engage_core::analysis::summarize_experiment;
use engage_core::calibration::Thresholds;
use engage_core::config::{EngineConfig, SessionMode};
use engage_core::recording::ReplaySource;
use engage_core::session::{
    plan_for, simulate as simulate_session, EngagementReport, LogEvent, PhaseKind, SessionLog,
    SessionPlan, SessionRunner,
};
use engage_core::telemetry::ControlMessage;
use engage_core::Error;
use engage_gateway::ingest::IngestServer;
use engage_gateway::live::{LiveConfig, LiveEngine, LiveSource};
use engage_gateway::telemetry::serve_telemetry;

use crate::options::ConfigArgs;

pub enum LiveSourceArg {
    Synth { speed: f64 },
    Tcp { port: u16 },
}

pub struct LiveArgs {
    pub source: LiveSourceArg,
    pub seed: u64,
    pub record: Option<PathBuf>,
    pub out: PathBuf,
    /// Telemetry port and optional console directory.
    pub telemetry: Option<(u16, Option<PathBuf>)>,
    pub autostart: bool,
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

/// session.jsonl and report.json.
fn write_session(out: &Path, log: &SessionLog) -> Result<EngagementReport> {
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let path = out.join("session.jsonl");
    log.save(&path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    let report = EngagementReport::from_log(log);
    write_json(&out.join("report.json"), &report)?;
    Ok(report)
}

fn print_report(report: &EngagementReport) {
    if let Some(th) = report.thresholds {
        println!("thresholds  low {:.4}  high {:.4}", th.low, th.high);
    }
    for p in &report.phases {
        let engaged = p
            .percent_engaged
            .map_or_else(|| "n/a".to_string(), |v| format!("{:.1}%", v * 100.0));
        println!(
            "{:<4} {:>6.0} s  engaged {:>6}  spawns {:>3}  despawns {:>3}",
            p.phase.label(),
            p.duration_s,
            engaged,
            p.spawns,
            p.despawns
        );
    }
}

pub fn simulate(cfg: &EngineConfig, seed: u64, out: &Path) -> Result<()> {
    let log = simulate_session(cfg, seed)?;
    let report = write_session(out, &log)?;
    print_report(&report);
    Ok(())
}

pub fn calibrate(
    config: &ConfigArgs,
    seed: u64,
    recording: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let mut cfg = config.base()?;
    cfg.mode = SessionMode::Calibrate;
    cfg.validate()?;
    let log = match recording {
        Some(path) => run_recording(cfg, None, seed, path)?,
        None => simulate_session(&cfg, seed)?,
    };
    write_session(out, &log)?;
    let th = calibrated(&log)?;
    write_json(&out.join("thresholds.json"), &th)?;
    println!("thresholds  low {:.4}  high {:.4}", th.low, th.high);
    Ok(())
}

fn calibrated(log: &SessionLog) -> Result<Thresholds> {
    for r in &log.records {
        if let LogEvent::PhaseEnd {
            phase: PhaseKind::B2,
            thresholds,
            calibration_error,
            ..
        } = &r.event
        {
            if let Some(th) = thresholds {
                return Ok(*th);
            }
            if let Some(e) = calibration_error {
                bail!("calibration failed: {e}");
            }
        }
    }
    bail!("calibration did not complete")
}

/// Runs a recording to its end. A recording shorter than the plan yields
/// `Error::SourceExhausted` together with the partial log.
fn replay_log(
    cfg: EngineConfig,
    plan: Option<SessionPlan>,
    seed: u64,
    recording: &Path,
) -> Result<(SessionLog, bool)> {
    let plan = plan.unwrap_or_else(|| plan_for(seed, &cfg.protocol, &cfg.mode));
    let mut source = ReplaySource::open(recording, &cfg.pipeline.channels)
        .with_context(|| format!("cannot replay {}", recording.display()))?;
    let mut runner = SessionRunner::new(cfg, plan, seed)?;
    match runner.run(&mut source) {
        Ok(()) => Ok((runner.into_log(), true)),
        Err(Error::SourceExhausted) => Ok((runner.into_log(), false)),
        Err(e) => Err(e).with_context(|| format!("while replaying {}", recording.display())),
    }
}

fn run_recording(
    cfg: EngineConfig,
    plan: Option<SessionPlan>,
    seed: u64,
    recording: &Path,
) -> Result<SessionLog> {
    match replay_log(cfg, plan, seed, recording)? {
        (log, true) => Ok(log),
        (_, false) => bail!(
            "{} ended before the session plan completed",
            recording.display()
        ),
    }
}

pub fn replay(
    cfg: EngineConfig,
    plan: Option<SessionPlan>,
    seed: u64,
    recording: &Path,
    out: &Path,
) -> Result<()> {
    let (log, complete) = replay_log(cfg, plan, seed, recording)?;
    let report = write_session(out, &log)?;
    print_report(&report);
    if !complete {
        bail!(
            "{} ended before the session plan completed; partial log written",
            recording.display()
        );
    }
    Ok(())
}

/// Replays under the configuration, plan and seed recorded in `session`.
pub fn replay_from_log(session: &Path, recording: &Path, out: &Path) -> Result<()> {
    let log =
        SessionLog::load(session).with_context(|| format!("cannot read {}", session.display()))?;
    let Some(LogEvent::Config { seed, plan, config }) =
        log.records.first().map(|r| r.event.clone())
    else {
        bail!("{} does not start with a config record", session.display());
    };
    replay(config, Some(plan), seed, recording, out)
}

pub fn live(cfg: EngineConfig, args: LiveArgs) -> Result<()> {
    let runtime = tokio::runtime::Runtime::new().context("cannot start async runtime")?;
    let source = match args.source {
        LiveSourceArg::Tcp { port } => {
            let server = IngestServer::bind((Ipv4Addr::LOCALHOST, port))?;
            eprintln!("ingest listening on {}", server.local_addr()?);
            LiveSource::Tcp(server)
        }
        LiveSourceArg::Synth { speed } => LiveSource::Synth {
            seed: args.seed,
            speed,
        },
    };
    let engine = LiveEngine::launch(
        LiveConfig {
            plan: plan_for(args.seed, &cfg.protocol, &cfg.mode),
            engine: cfg,
            seed: args.seed,
            record: args.record,
            autostart: args.autostart,
        },
        source,
    )?;
    let handle = engine.handle();
    if let Some((port, console_dir)) = args.telemetry {
        let listener = runtime
            .block_on(tokio::net::TcpListener::bind((Ipv4Addr::LOCALHOST, port)))
            .with_context(|| format!("cannot bind telemetry port {port}"))?;
        eprintln!("telemetry on ws://{}/ws", listener.local_addr()?);
        let handle = handle.clone();
        runtime.spawn(async move {
            if let Err(e) = serve_telemetry(listener, handle, console_dir).await {
                log::error!("telemetry server failed: {e}");
            }
        });
    }
    runtime.spawn(async move {
        if tokio::signal::ctrl_c().await.is_ok() {
            log::info!("interrupted, stopping session");
            let _ = handle.control(ControlMessage::Stop);
        }
    });

    let outcome = engine.wait()?;
    let report = write_session(&args.out, &outcome.log)?;
    let stats = serde_json::json!({
        "lines_ok": outcome.stats.lines_ok,
        "lines_malformed": outcome.stats.lines_malformed,
        "samples_dropped": outcome.stats.samples_dropped,
        "tei_dropped": outcome.tei_dropped,
    });
    write_json(&args.out.join("ingest_stats.json"), &stats)?;
    print_report(&report);
    runtime.shutdown_background();
    if !outcome.completed && !outcome.stopped {
        bail!("sample source ended before the session plan completed; partial log written");
    }
    Ok(())
}

/// Every `*.jsonl` below `dir`, sorted, named by relative path.
fn collect_logs(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut found = Vec::new();
    let mut pending = vec![dir.to_path_buf()];
    while let Some(d) = pending.pop() {
        for entry in std::fs::read_dir(&d)
            .with_context(|| format!("cannot read directory {}", d.display()))?
        {
            let path = entry?.path();
            if path.is_dir() {
                pending.push(path);
            } else if path.extension().is_some_and(|e| e == "jsonl") {
                let rel = path.strip_prefix(dir).unwrap_or(&path).with_extension("");
                let name = match (rel.file_name(), rel.parent()) {
                    // out/s1/session.jsonl is subject "s1"
                    (Some(f), Some(parent)) if f == "session" && !parent.as_os_str().is_empty() => {
                        parent.to_path_buf()
                    }
                    _ => rel,
                };
                found.push((name.to_string_lossy().into_owned(), path));
            }
        }
    }
    found.sort();
    Ok(found)
}

pub fn analyze(dir: &Path, out: &Path) -> Result<()> {
    let files = collect_logs(dir)?;
    if files.is_empty() {
        bail!("no session logs (*.jsonl) under {}", dir.display());
    }
    let mut logs = Vec::with_capacity(files.len());
    for (name, path) in files {
        let log =
            SessionLog::load(&path).with_context(|| format!("cannot read {}", path.display()))?;
        logs.push((name, log));
    }
    let report = summarize_experiment(&logs)?;
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    write_json(&out.join("report.json"), &report)?;
    let text = report.render_text();
    std::fs::write(out.join("report.txt"), &text)
        .with_context(|| format!("cannot write {}", out.join("report.txt").display()))?;
    print!("{text}");
    Ok(())
}
