//! Experiment orchestration: phase plan, closed-loop session state machine,
//! the JSON-lines event log and the engagement metric derived from it.
//!
//! Times in the log are stream seconds. A TEI point stamped exactly at a phase
//! boundary belongs to the phase that starts there.

use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calibration::{finalize_thresholds, CalibrationPhase, PhaseLog, Thresholds};
use crate::config::{EngineConfig, ProtocolConfig, SessionMode};
use crate::controller::{tick, ControlMode, DifficultyAction, DifficultyState};
use crate::engagement::{Quality, TeiPoint};
use crate::error::{Error, Result};
use crate::pipeline::{Pipeline, PipelineOutput};
use crate::signal::EegSample;
use crate::synth::SynthSource;
use crate::telemetry::TelemetryFrame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PhaseKind {
    #[serde(rename = "familiarization")]
    Familiarization,
    /// Control block: fixed stimulus schedule.
    A,
    B1,
    B2,
    /// Closed-loop block.
    B3,
}

impl PhaseKind {
    pub fn label(&self) -> &'static str {
        match self {
            PhaseKind::Familiarization => "familiarization",
            PhaseKind::A => "A",
            PhaseKind::B1 => "B1",
            PhaseKind::B2 => "B2",
            PhaseKind::B3 => "B3",
        }
    }
}

impl fmt::Display for PhaseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannedPhase {
    pub kind: PhaseKind,
    pub duration_s: f64,
    pub control: ControlMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionPlan {
    pub a_first: bool,
    pub phases: Vec<PlannedPhase>,
}

impl SessionPlan {
    pub fn total_duration_s(&self) -> f64 {
        self.phases.iter().map(|p| p.duration_s).sum()
    }

    pub fn kinds(&self) -> Vec<PhaseKind> {
        self.phases.iter().map(|p| p.kind).collect()
    }
}

/// The full protocol with reference durations.
pub fn build_plan(seed: u64) -> SessionPlan {
    plan_for(seed, &ProtocolConfig::default(), &SessionMode::Protocol)
}

/// Block order comes from the first draw of a ChaCha8 generator seeded with
/// `seed`; A goes first when it returns true.
pub fn plan_for(seed: u64, protocol: &ProtocolConfig, mode: &SessionMode) -> SessionPlan {
    let a_first = ChaCha8Rng::seed_from_u64(seed).random_bool(0.5);
    let p = protocol;
    let phase = |kind, duration_s, control| PlannedPhase {
        kind,
        duration_s,
        control,
    };
    let block_a = [phase(
        PhaseKind::A,
        p.control_s,
        ControlMode::FixedSchedule {
            interval_s: p.control_interval_s,
        },
    )];
    let block_b = [
        phase(PhaseKind::B1, p.calibration_low_s, ControlMode::Idle),
        phase(
            PhaseKind::B2,
            p.calibration_high_s,
            ControlMode::FixedSchedule {
                interval_s: p.calibration_high_interval_s,
            },
        ),
        phase(PhaseKind::B3, p.dda_s, ControlMode::Dda),
    ];
    let phases = match *mode {
        SessionMode::Protocol => {
            let mut v = vec![phase(
                PhaseKind::Familiarization,
                p.familiarization_s,
                ControlMode::Idle,
            )];
            if a_first {
                v.extend(block_a);
                v.extend(block_b);
            } else {
                v.extend(block_b);
                v.extend(block_a);
            }
            v
        }
        SessionMode::DdaOnly { duration_s } => {
            vec![phase(PhaseKind::B3, duration_s, ControlMode::Dda)]
        }
        SessionMode::Fixed {
            interval_s,
            duration_s,
        } => {
            vec![phase(
                PhaseKind::A,
                duration_s,
                ControlMode::FixedSchedule { interval_s },
            )]
        }
        SessionMode::Calibrate => block_b[..2].to_vec(),
    };
    SessionPlan { a_first, phases }
}

/// One line of the session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub t: f64,
    #[serde(flatten)]
    pub event: LogEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
// the config variant occurs once per log
#[allow(clippy::large_enum_variant)]
pub enum LogEvent {
    Config {
        seed: u64,
        plan: SessionPlan,
        config: EngineConfig,
    },
    Tei {
        phase: PhaseKind,
        raw: f64,
        /// Smoothed value, the one the controller and metric use.
        tei: f64,
        quality: Quality,
        /// Active stimuli when the point arrived.
        difficulty: u32,
    },
    Spawn {
        phase: PhaseKind,
        active: u32,
    },
    Despawn {
        phase: PhaseKind,
        active: u32,
    },
    PhaseStart {
        phase: PhaseKind,
        duration_s: f64,
        control: ControlMode,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        thresholds: Option<Thresholds>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        threshold_source: Option<String>,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        aborted: bool,
    },
    PhaseEnd {
        phase: PhaseKind,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        thresholds: Option<Thresholds>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        calibration_error: Option<String>,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        stopped: bool,
    },
    Dropped {
        reason: String,
        sample_t: f64,
    },
    /// Operator command applied to a live session.
    Control {
        command: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        thresholds: Option<Thresholds>,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SessionLog {
    pub records: Vec<LogRecord>,
}

impl SessionLog {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("log records always serialize"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(self.to_jsonl().as_bytes())?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_jsonl())?;
        Ok(())
    }

    pub fn parse_jsonl(r: impl Read) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in BufReader::new(r).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: LogRecord = serde_json::from_str(&line)
                .map_err(|e| Error::MalformedLog(format!("line {}: {e}", i + 1)))?;
            records.push(rec);
        }
        if records.is_empty() {
            return Err(Error::MalformedLog("empty log".into()));
        }
        Ok(Self { records })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse_jsonl(std::fs::File::open(path)?)
    }

    pub fn seed(&self) -> Option<u64> {
        self.records.iter().find_map(|r| match r.event {
            LogEvent::Config { seed, .. } => Some(seed),
            _ => None,
        })
    }

    /// Smoothed TEI points logged during `phase`.
    pub fn tei_in(&self, phase: PhaseKind) -> Vec<TeiPoint> {
        self.records
            .iter()
            .filter_map(|r| match r.event {
                LogEvent::Tei {
                    phase: p,
                    raw,
                    tei,
                    quality,
                    ..
                } if p == phase => Some(TeiPoint {
                    t: r.t,
                    raw,
                    smoothed: tei,
                    quality,
                }),
                _ => None,
            })
            .collect()
    }

    /// The most recent thresholds announced in the log.
    pub fn thresholds(&self) -> Option<Thresholds> {
        self.records.iter().rev().find_map(|r| match &r.event {
            LogEvent::PhaseStart { thresholds, .. }
            | LogEvent::PhaseEnd { thresholds, .. }
            | LogEvent::Control { thresholds, .. } => *thresholds,
            _ => None,
        })
    }

    /// `(start, end)` of each phase that both started and ended.
    pub fn phase_intervals(&self) -> Vec<(PhaseKind, f64, f64)> {
        let mut open: Option<(PhaseKind, f64)> = None;
        let mut out = Vec::new();
        for r in &self.records {
            match r.event {
                LogEvent::PhaseStart { phase, .. } => open = Some((phase, r.t)),
                LogEvent::PhaseEnd { phase, .. } => {
                    if let Some((p, start)) = open.take() {
                        if p == phase {
                            out.push((phase, start, r.t));
                        }
                    }
                }
                _ => {}
            }
        }
        out
    }
}

/// Fraction of points whose smoothed TEI lies in `[low, high]`.
pub fn percent_time_engaged(tei: &[TeiPoint], th: &Thresholds) -> Result<f64> {
    if tei.is_empty() {
        return Err(Error::EmptySeries);
    }
    let inside = tei.iter().filter(|p| th.contains(p.smoothed)).count();
    Ok(inside as f64 / tei.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub phase: PhaseKind,
    pub duration_s: f64,
    pub tei_points: usize,
    /// `None` without thresholds or points.
    pub percent_engaged: Option<f64>,
    pub spawns: u32,
    pub despawns: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngagementReport {
    pub seed: Option<u64>,
    pub thresholds: Option<Thresholds>,
    /// Familiarization is left out.
    pub phases: Vec<PhaseReport>,
}

impl EngagementReport {
    pub fn from_log(log: &SessionLog) -> Self {
        let thresholds = log.thresholds();
        let phases = log
            .phase_intervals()
            .into_iter()
            .filter(|(kind, ..)| *kind != PhaseKind::Familiarization)
            .map(|(kind, start, end)| {
                let tei = log.tei_in(kind);
                let count = |want: fn(&LogEvent) -> bool| {
                    log.records
                        .iter()
                        .filter(|r| want(&r.event) && phase_of(&r.event) == Some(kind))
                        .count() as u32
                };
                PhaseReport {
                    phase: kind,
                    duration_s: end - start,
                    tei_points: tei.len(),
                    percent_engaged: thresholds.and_then(|th| percent_time_engaged(&tei, &th).ok()),
                    spawns: count(|e| matches!(e, LogEvent::Spawn { .. })),
                    despawns: count(|e| matches!(e, LogEvent::Despawn { .. })),
                }
            })
            .collect();
        Self {
            seed: log.seed(),
            thresholds,
            phases,
        }
    }

    pub fn percent(&self, phase: PhaseKind) -> Option<f64> {
        self.phases
            .iter()
            .find(|p| p.phase == phase)?
            .percent_engaged
    }
}

fn phase_of(e: &LogEvent) -> Option<PhaseKind> {
    match *e {
        LogEvent::Tei { phase, .. }
        | LogEvent::Spawn { phase, .. }
        | LogEvent::Despawn { phase, .. }
        | LogEvent::PhaseStart { phase, .. }
        | LogEvent::PhaseEnd { phase, .. } => Some(phase),
        _ => None,
    }
}

/// Phase sequencing, calibration and difficulty control over a stream of
/// pipeline outputs.
#[derive(Debug, Clone)]
pub struct Session {
    cfg: EngineConfig,
    plan: SessionPlan,
    log: SessionLog,
    origin: Option<f64>,
    phase_idx: usize,
    phase_start_t: f64,
    state: DifficultyState,
    thresholds: Option<Thresholds>,
    b1: Option<PhaseLog>,
    b2: Option<PhaseLog>,
    finished: bool,
    last_t: f64,
}

impl Session {
    pub fn new(cfg: EngineConfig, plan: SessionPlan, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if plan.phases.is_empty() {
            return Err(Error::InvalidConfig("empty session plan".into()));
        }
        if let Some(p) = plan.phases.iter().find(|p| !(p.duration_s > 0.0)) {
            return Err(Error::InvalidConfig(format!(
                "phase {} has no duration",
                p.kind
            )));
        }
        let log = SessionLog {
            records: vec![LogRecord {
                t: 0.0,
                event: LogEvent::Config {
                    seed,
                    plan: plan.clone(),
                    config: cfg.clone(),
                },
            }],
        };
        Ok(Self {
            cfg,
            plan,
            log,
            origin: None,
            phase_idx: 0,
            phase_start_t: 0.0,
            state: DifficultyState::new(ControlMode::Idle),
            thresholds: None,
            b1: None,
            b2: None,
            finished: false,
            last_t: 0.0,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn plan(&self) -> &SessionPlan {
        &self.plan
    }

    pub fn log(&self) -> &SessionLog {
        &self.log
    }

    pub fn into_log(self) -> SessionLog {
        self.log
    }

    pub fn is_started(&self) -> bool {
        self.origin.is_some()
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn active_stimuli(&self) -> u32 {
        self.state.active_stimuli
    }

    pub fn thresholds(&self) -> Option<Thresholds> {
        self.thresholds
    }

    pub fn current_phase(&self) -> Option<PhaseKind> {
        (self.is_started() && !self.finished).then(|| self.plan.phases[self.phase_idx].kind)
    }

    pub fn mode(&self) -> ControlMode {
        self.state.mode
    }

    /// Opens the first phase at stream time `origin`.
    pub fn start(&mut self, origin: f64) {
        if self.origin.is_some() {
            return;
        }
        self.origin = Some(origin);
        self.enter_phase(0, origin);
    }

    fn phase_end_t(&self) -> f64 {
        self.phase_start_t + self.plan.phases[self.phase_idx].duration_s
    }

    fn push(&mut self, t: f64, event: LogEvent) {
        self.last_t = self.last_t.max(t);
        self.log.records.push(LogRecord { t, event });
    }

    fn enter_phase(&mut self, idx: usize, t: f64) {
        let planned = self.plan.phases[idx];
        self.phase_idx = idx;
        self.phase_start_t = t;
        let mut control = planned.control;
        let mut source = None;
        let mut aborted = false;
        match planned.kind {
            PhaseKind::B1 => self.b1 = Some(PhaseLog::new(CalibrationPhase::B1, t)),
            PhaseKind::B2 => self.b2 = Some(PhaseLog::new(CalibrationPhase::B2, t)),
            PhaseKind::B3 => {
                let calibrated = self.plan.kinds().contains(&PhaseKind::B2);
                if calibrated {
                    source = self.thresholds.map(|_| "calibration".to_string());
                } else {
                    self.thresholds = self.cfg.thresholds;
                    source = self.thresholds.map(|_| "config".to_string());
                }
                if self.thresholds.is_none() {
                    control = ControlMode::Idle;
                    aborted = true;
                }
            }
            _ => {}
        }
        self.state = DifficultyState::new(control);
        let thresholds = if planned.kind == PhaseKind::B3 {
            self.thresholds
        } else {
            None
        };
        self.push(
            t,
            LogEvent::PhaseStart {
                phase: planned.kind,
                duration_s: planned.duration_s,
                control,
                thresholds,
                threshold_source: source,
                aborted,
            },
        );
    }

    fn close_phase(&mut self, t: f64, stopped: bool) {
        let kind = self.plan.phases[self.phase_idx].kind;
        let mut thresholds = None;
        let mut calibration_error = None;
        if kind == PhaseKind::B2 && !stopped {
            let result = match (&self.b1, &self.b2) {
                (Some(b1), Some(b2)) => finalize_thresholds(b1, b2, &self.cfg.calibration),
                _ => Err(Error::EmptyPhase),
            };
            match result {
                Ok(th) => {
                    self.thresholds = Some(th);
                    thresholds = Some(th);
                }
                Err(e) => {
                    self.thresholds = None;
                    calibration_error = Some(e.to_string());
                }
            }
        }
        self.push(
            t,
            LogEvent::PhaseEnd {
                phase: kind,
                thresholds,
                calibration_error,
                stopped,
            },
        );
    }

    /// Closes every phase that ends at or before `t`.
    fn advance_to(&mut self, t: f64) {
        while !self.finished && t >= self.phase_end_t() {
            let end = self.phase_end_t();
            self.close_phase(end, false);
            if self.phase_idx + 1 < self.plan.phases.len() {
                self.enter_phase(self.phase_idx + 1, end);
            } else {
                self.finished = true;
            }
        }
    }

    /// Records a sample or epoch that could not be used.
    pub fn on_dropped(&mut self, sample_t: f64, reason: &str) {
        if self.finished {
            return;
        }
        let t = if sample_t.is_finite() {
            sample_t.max(self.last_t)
        } else {
            self.last_t
        };
        self.push(
            t,
            LogEvent::Dropped {
                reason: reason.to_string(),
                sample_t,
            },
        );
    }

    /// Consumes one pipeline output; returns the telemetry frame for a logged
    /// TEI point.
    pub fn on_output(&mut self, out: &PipelineOutput) -> Option<TelemetryFrame> {
        if !self.is_started() || self.finished {
            return None;
        }
        match *out {
            PipelineOutput::Rejected { t, reason, .. } => {
                self.advance_to(t);
                self.on_dropped(t, reason);
                None
            }
            PipelineOutput::Point { point, .. } => self.on_point(point),
        }
    }

    fn on_point(&mut self, point: TeiPoint) -> Option<TelemetryFrame> {
        self.advance_to(point.t);
        if self.finished {
            return None;
        }
        let kind = self.plan.phases[self.phase_idx].kind;
        let difficulty = self.state.active_stimuli;
        self.push(
            point.t,
            LogEvent::Tei {
                phase: kind,
                raw: point.raw,
                tei: point.smoothed,
                quality: point.quality,
                difficulty,
            },
        );
        match kind {
            PhaseKind::B1 => self.b1.as_mut().map(|l| l.tei.push(point)),
            PhaseKind::B2 => self.b2.as_mut().map(|l| l.tei.push(point)),
            _ => None,
        };

        let (action, next) = tick(
            &self.state,
            &point,
            self.thresholds.as_ref(),
            point.t,
            &self.cfg.controller,
        );
        self.state = next;
        match action {
            DifficultyAction::SpawnStimulus => self.push(
                point.t,
                LogEvent::Spawn {
                    phase: kind,
                    active: next.active_stimuli,
                },
            ),
            DifficultyAction::RemoveStimulus => self.push(
                point.t,
                LogEvent::Despawn {
                    phase: kind,
                    active: next.active_stimuli,
                },
            ),
            DifficultyAction::NoAction => {}
        }
        Some(TelemetryFrame {
            t: point.t,
            tei_raw: point.raw,
            tei: point.smoothed,
            low: self.thresholds.map(|t| t.low),
            high: self.thresholds.map(|t| t.high),
            difficulty: self.state.active_stimuli,
            phase: kind.label().to_string(),
            mode: self.state.mode.label().to_string(),
        })
    }

    /// Operator override of the current phase's controller policy.
    pub fn set_control(&mut self, control: ControlMode) {
        if self.finished {
            return;
        }
        self.state.mode = control;
        self.state.out_of_band = None;
        let t = self.last_t;
        self.push(
            t,
            LogEvent::Control {
                command: format!("set_mode:{}", control.label()),
                thresholds: None,
            },
        );
    }

    pub fn set_thresholds(&mut self, th: Thresholds) -> Result<()> {
        let th = Thresholds::new(th.low, th.high)?;
        self.thresholds = Some(th);
        let t = self.last_t;
        self.push(
            t,
            LogEvent::Control {
                command: "set_thresholds".into(),
                thresholds: Some(th),
            },
        );
        Ok(())
    }

    /// Ends the session early at the latest logged time.
    pub fn stop(&mut self) {
        if self.finished {
            return;
        }
        if self.is_started() {
            let t = self.last_t;
            self.close_phase(t, true);
        }
        self.finished = true;
    }
}

/// A stream of samples that may react to the current stimulus count.
pub trait SampleSource {
    /// `Ok(None)` at end of stream.
    fn next_batch(&mut self, active_stimuli: u32) -> Result<Option<Vec<EegSample>>>;
}

impl SampleSource for SynthSource {
    fn next_batch(&mut self, active_stimuli: u32) -> Result<Option<Vec<EegSample>>> {
        Ok(Some(self.next_block(active_stimuli)))
    }
}

/// Pipeline plus session: samples in, log out.
#[derive(Debug, Clone)]
pub struct SessionRunner {
    pipeline: Pipeline,
    session: Session,
}

impl SessionRunner {
    pub fn new(cfg: EngineConfig, plan: SessionPlan, seed: u64) -> Result<Self> {
        let pipeline = Pipeline::new(cfg.pipeline.clone())?;
        let session = Session::new(cfg, plan, seed)?;
        Ok(Self { pipeline, session })
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn session_mut(&mut self) -> &mut Session {
        &mut self.session
    }

    pub fn into_log(self) -> SessionLog {
        self.session.into_log()
    }

    /// Discards buffered samples; the next sample starts fresh epochs.
    pub fn reset_pipeline(&mut self) -> Result<()> {
        self.pipeline = Pipeline::new(self.session.config().pipeline.clone())?;
        Ok(())
    }

    /// Feeds one sample. The first accepted sample starts the session.
    /// Unusable samples are logged as dropped, not returned as errors.
    pub fn feed(&mut self, s: &EegSample) -> Result<Option<TelemetryFrame>> {
        if self.session.is_finished() {
            return Ok(None);
        }
        match self.pipeline.push_sample(s) {
            Ok(out) => {
                self.session.start(s.t);
                Ok(out.and_then(|o| self.session.on_output(&o)))
            }
            Err(Error::ChannelCountMismatch { .. }) => {
                self.session.on_dropped(s.t, "channel_count_mismatch");
                Ok(None)
            }
            Err(Error::NonMonotoneTimestamp { .. }) => {
                self.session.on_dropped(s.t, "non_monotone_timestamp");
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }

    /// Drives the session from `source` until the plan completes.
    pub fn run(&mut self, source: &mut impl SampleSource) -> Result<()> {
        while !self.session.is_finished() {
            let Some(batch) = source.next_batch(self.session.active_stimuli())? else {
                return Err(Error::SourceExhausted);
            };
            for s in &batch {
                self.feed(s)?;
            }
        }
        Ok(())
    }
}

pub fn run_session(
    cfg: EngineConfig,
    plan: SessionPlan,
    seed: u64,
    source: &mut impl SampleSource,
) -> Result<SessionLog> {
    let mut runner = SessionRunner::new(cfg, plan, seed)?;
    runner.run(source)?;
    Ok(runner.into_log())
}

/// Player update period of the simulated subject.
pub const SYNTH_BLOCK_SECONDS: f64 = 0.25;

/// Runs the configured plan on the reference synthetic player.
pub fn simulate(cfg: &EngineConfig, seed: u64) -> Result<SessionLog> {
    let plan = plan_for(seed, &cfg.protocol, &cfg.mode);
    let mut source = SynthSource::new(
        seed,
        cfg.player,
        &cfg.pipeline.channels,
        SYNTH_BLOCK_SECONDS,
    )?;
    run_session(cfg.clone(), plan, seed, &mut source)
}
