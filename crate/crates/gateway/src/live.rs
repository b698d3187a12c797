//! Live three-stage engine: source → DSP → session, each on its own thread,
//! joined by drop-oldest buffers.
//!
//! The source stage is either a TCP ingest client or the synthetic player in
//! wall-clock time. The DSP stage records accepted samples and runs the
//! pipeline. The session stage applies operator controls between controller
//! ticks and publishes one telemetry frame per TEI point.

use std::fs::File;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU32, Ordering};
use std::sync::mpsc;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use engage_core::calibration::Thresholds;
use engage_core::config::EngineConfig;
use engage_core::controller::ControlMode;
use engage_core::pipeline::{Pipeline, PipelineOutput};
use engage_core::recording::Recorder;
use engage_core::session::{Session, SessionLog, SessionPlan, SYNTH_BLOCK_SECONDS};
use engage_core::synth::SynthSource;
use engage_core::telemetry::{ControlMessage, ModeRequest, ServerMessage};
use engage_core::Error;
use tokio::sync::broadcast;

use crate::error::{GatewayError, Result};
use crate::ingest::{IngestCounters, IngestItem, IngestServer, IngestStats, SAMPLE_QUEUE_CAPACITY};
use crate::queue::{DropOldestQueue, Pop};

/// Capacity of the DSP-to-session buffer, in TEI outputs.
pub const TEI_QUEUE_CAPACITY: usize = 64;

const POLL: Duration = Duration::from_millis(20);

pub enum LiveSource {
    Tcp(IngestServer),
    /// Reference player paced at `speed` times real time.
    Synth {
        seed: u64,
        speed: f64,
    },
}

pub struct LiveConfig {
    pub engine: EngineConfig,
    pub plan: SessionPlan,
    pub seed: u64,
    /// CSV file receiving every sample the pipeline accepts.
    pub record: Option<PathBuf>,
    /// Start processing immediately instead of waiting for a start command.
    pub autostart: bool,
}

enum Staged {
    Origin(f64),
    Output(PipelineOutput),
    Dropped { t: f64, reason: &'static str },
}

enum SourceCommand {
    Pin(f64),
    Release,
}

/// Cloneable control surface of a running engine.
#[derive(Clone)]
pub struct EngineHandle {
    controls: mpsc::Sender<ControlMessage>,
    source_cmds: Option<mpsc::Sender<SourceCommand>>,
    telemetry: broadcast::Sender<String>,
    started: Arc<AtomicBool>,
    counters: Arc<IngestCounters>,
}

impl EngineHandle {
    /// Routes a validated control message. Errors are reasons suitable for
    /// an error frame.
    pub fn control(&self, msg: ControlMessage) -> std::result::Result<(), String> {
        let gone = |_| "session has ended".to_string();
        match msg {
            ControlMessage::SetArousal { value } => match &self.source_cmds {
                Some(tx) => tx.send(SourceCommand::Pin(value)).map_err(gone),
                None => Err("arousal control requires the synthetic source".into()),
            },
            ControlMessage::ReleaseArousal => match &self.source_cmds {
                Some(tx) => tx.send(SourceCommand::Release).map_err(gone),
                None => Err("arousal control requires the synthetic source".into()),
            },
            ControlMessage::Start => {
                self.started.store(true, Ordering::Release);
                Ok(())
            }
            other => self
                .controls
                .send(other)
                .map_err(|_| "session has ended".to_string()),
        }
    }

    pub fn subscribe(&self) -> broadcast::Receiver<String> {
        self.telemetry.subscribe()
    }

    pub fn stats(&self) -> IngestStats {
        self.counters.snapshot()
    }

    pub fn is_started(&self) -> bool {
        self.started.load(Ordering::Acquire)
    }
}

#[derive(Debug)]
pub struct LiveOutcome {
    pub log: SessionLog,
    pub stats: IngestStats,
    /// False when the source ended before the plan did.
    pub completed: bool,
    pub stopped: bool,
    /// TEI outputs evicted before the session stage read them.
    pub tei_dropped: u64,
}

pub struct LiveEngine {
    handle: EngineHandle,
    session: JoinHandle<(SessionLog, bool, bool)>,
    dsp: JoinHandle<Result<()>>,
    source: Option<JoinHandle<Result<()>>>,
    shutdown: Arc<AtomicBool>,
    samples: Arc<DropOldestQueue<IngestItem>>,
    staged: Arc<DropOldestQueue<Staged>>,
}

impl LiveEngine {
    pub fn launch(cfg: LiveConfig, source: LiveSource) -> Result<Self> {
        let session = Session::new(cfg.engine.clone(), cfg.plan.clone(), cfg.seed)?;
        // validate before any thread starts
        Pipeline::new(cfg.engine.pipeline.clone())?;
        let recorder = match &cfg.record {
            Some(path) => Some(Recorder::create(path, &cfg.engine.pipeline.channels)?),
            None => None,
        };

        let samples = Arc::new(DropOldestQueue::new(SAMPLE_QUEUE_CAPACITY));
        let staged = Arc::new(DropOldestQueue::new(TEI_QUEUE_CAPACITY));
        let counters = Arc::new(IngestCounters::default());
        let started = Arc::new(AtomicBool::new(cfg.autostart));
        let shutdown = Arc::new(AtomicBool::new(false));
        let difficulty = Arc::new(AtomicU32::new(0));
        let (telemetry, _) = broadcast::channel(256);
        let (controls, control_rx) = mpsc::channel();
        let n_channels = cfg.engine.pipeline.channels.channel_count();

        let (source_cmds, source_thread) = match source {
            LiveSource::Tcp(server) => {
                let (q, c) = (Arc::clone(&samples), Arc::clone(&counters));
                let t = spawn("ingest", move || server.serve_one(n_channels, q, c))?;
                (None, t)
            }
            LiveSource::Synth { seed, speed } => {
                if !(speed > 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "synth speed must be positive, got {speed}"
                    ))
                    .into());
                }
                let src = SynthSource::new(
                    seed,
                    cfg.engine.player,
                    &cfg.engine.pipeline.channels,
                    SYNTH_BLOCK_SECONDS,
                )?;
                let (tx, rx) = mpsc::channel();
                let ctx = SynthStage {
                    src,
                    speed,
                    commands: rx,
                    queue: Arc::clone(&samples),
                    counters: Arc::clone(&counters),
                    difficulty: Arc::clone(&difficulty),
                    shutdown: Arc::clone(&shutdown),
                };
                (Some(tx), spawn("synth", move || ctx.run())?)
            }
        };

        let dsp = {
            let ctx = DspStage {
                pipeline_cfg: cfg.engine.pipeline.clone(),
                samples: Arc::clone(&samples),
                staged: Arc::clone(&staged),
                started: Arc::clone(&started),
                shutdown: Arc::clone(&shutdown),
                recorder,
            };
            spawn("dsp", move || ctx.run())?
        };

        let session_thread = {
            let ctx = SessionStage {
                session,
                controls: control_rx,
                staged: Arc::clone(&staged),
                telemetry: telemetry.clone(),
                difficulty: Arc::clone(&difficulty),
                fixed_interval_s: cfg.engine.protocol.control_interval_s,
            };
            spawn("session", move || ctx.run())?
        };

        Ok(Self {
            handle: EngineHandle {
                controls,
                source_cmds,
                telemetry,
                started,
                counters,
            },
            session: session_thread,
            dsp,
            source: Some(source_thread),
            shutdown,
            samples,
            staged,
        })
    }

    pub fn handle(&self) -> EngineHandle {
        self.handle.clone()
    }

    /// Blocks until the session ends, then winds down the other stages.
    pub fn wait(mut self) -> Result<LiveOutcome> {
        let (log, completed, stopped) = self
            .session
            .join()
            .map_err(|_| GatewayError::ThreadPanicked("session"))?;
        self.shutdown.store(true, Ordering::Release);
        self.samples.close();
        self.staged.close();
        self.dsp
            .join()
            .map_err(|_| GatewayError::ThreadPanicked("dsp"))??;
        if let Some(src) = self.source.take() {
            // a TCP reader may be parked on a silent client; only the
            // synthetic source is guaranteed to notice shutdown
            if self.handle.source_cmds.is_some() {
                src.join()
                    .map_err(|_| GatewayError::ThreadPanicked("synth"))??;
            }
        }
        Ok(LiveOutcome {
            log,
            stats: self.handle.stats(),
            completed,
            stopped,
            tei_dropped: self.staged.dropped(),
        })
    }
}

fn spawn<T: Send + 'static>(
    name: &str,
    f: impl FnOnce() -> T + Send + 'static,
) -> Result<JoinHandle<T>> {
    Ok(std::thread::Builder::new()
        .name(format!("engage-{name}"))
        .spawn(f)?)
}

struct SynthStage {
    src: SynthSource,
    speed: f64,
    commands: mpsc::Receiver<SourceCommand>,
    queue: Arc<DropOldestQueue<IngestItem>>,
    counters: Arc<IngestCounters>,
    difficulty: Arc<AtomicU32>,
    shutdown: Arc<AtomicBool>,
}

impl SynthStage {
    fn run(mut self) -> Result<()> {
        let period = Duration::from_secs_f64(SYNTH_BLOCK_SECONDS / self.speed);
        let mut deadline = Instant::now();
        while !self.shutdown.load(Ordering::Acquire) {
            while let Ok(cmd) = self.commands.try_recv() {
                match cmd {
                    SourceCommand::Pin(v) => self.src.player_mut().pin(v)?,
                    SourceCommand::Release => self.src.player_mut().release(),
                }
            }
            for s in self.src.next_block(self.difficulty.load(Ordering::Acquire)) {
                let before = self.queue.dropped();
                if !self.queue.push(IngestItem::Sample(s)) {
                    return Ok(());
                }
                self.counters.add_dropped(self.queue.dropped() - before);
            }
            deadline += period;
            let now = Instant::now();
            if deadline > now {
                std::thread::sleep(deadline - now);
            } else {
                deadline = now;
            }
        }
        self.queue.close();
        Ok(())
    }
}

struct DspStage {
    pipeline_cfg: engage_core::pipeline::PipelineConfig,
    samples: Arc<DropOldestQueue<IngestItem>>,
    staged: Arc<DropOldestQueue<Staged>>,
    started: Arc<AtomicBool>,
    shutdown: Arc<AtomicBool>,
    recorder: Option<Recorder<File>>,
}

impl DspStage {
    fn run(mut self) -> Result<()> {
        let result = self.process();
        self.staged.close();
        if let Some(rec) = self.recorder.as_mut() {
            rec.flush()?;
        }
        result
    }

    fn process(&mut self) -> Result<()> {
        // built on the first sample after start so stale data never leaks in
        let mut pipeline: Option<Pipeline> = None;
        let mut origin_sent = false;
        loop {
            let item = match self.samples.pop_timeout(POLL) {
                Pop::Item(item) => item,
                Pop::TimedOut if self.shutdown.load(Ordering::Acquire) => return Ok(()),
                Pop::TimedOut => continue,
                Pop::Closed => return Ok(()),
            };
            if !self.started.load(Ordering::Acquire) {
                continue;
            }
            let p = match pipeline.as_mut() {
                Some(p) => p,
                None => pipeline.insert(Pipeline::new(self.pipeline_cfg.clone())?),
            };
            match item {
                IngestItem::Sample(s) => match p.push_sample(&s) {
                    Ok(out) => {
                        if !origin_sent {
                            self.staged.push(Staged::Origin(s.t));
                            origin_sent = true;
                        }
                        if let Some(rec) = self.recorder.as_mut() {
                            rec.record(&s)?;
                        }
                        if let Some(o) = out {
                            self.staged.push(Staged::Output(o));
                        }
                    }
                    Err(Error::NonMonotoneTimestamp { .. }) => {
                        self.staged.push(Staged::Dropped {
                            t: s.t,
                            reason: "non_monotone_timestamp",
                        });
                    }
                    Err(e) => return Err(e.into()),
                },
                IngestItem::Mismatch { t, .. } => {
                    self.staged.push(Staged::Dropped {
                        t,
                        reason: "channel_count_mismatch",
                    });
                }
            }
        }
    }
}

struct SessionStage {
    session: Session,
    controls: mpsc::Receiver<ControlMessage>,
    staged: Arc<DropOldestQueue<Staged>>,
    telemetry: broadcast::Sender<String>,
    difficulty: Arc<AtomicU32>,
    fixed_interval_s: f64,
}

impl SessionStage {
    /// Returns the log, whether the plan completed and whether it was stopped.
    fn run(mut self) -> (SessionLog, bool, bool) {
        let mut stopped = false;
        while !self.session.is_finished() {
            while let Ok(msg) = self.controls.try_recv() {
                stopped |= self.apply(msg);
            }
            if stopped {
                self.session.stop();
                break;
            }
            match self.staged.pop_timeout(POLL) {
                Pop::Item(Staged::Origin(t)) => self.session.start(t),
                Pop::Item(Staged::Output(out)) => {
                    if let Some(frame) = self.session.on_output(&out) {
                        let _ = self
                            .telemetry
                            .send(ServerMessage::Telemetry(frame).to_json());
                    }
                }
                Pop::Item(Staged::Dropped { t, reason }) => self.session.on_dropped(t, reason),
                Pop::TimedOut => {}
                Pop::Closed => break,
            }
            self.difficulty
                .store(self.session.active_stimuli(), Ordering::Release);
        }
        let completed = self.session.is_finished() && !stopped;
        (self.session.into_log(), completed, stopped)
    }

    /// True for a stop request.
    fn apply(&mut self, msg: ControlMessage) -> bool {
        match msg {
            ControlMessage::Stop => return true,
            ControlMessage::SetMode { mode } => self.session.set_control(match mode {
                ModeRequest::Dda => ControlMode::Dda,
                ModeRequest::Fixed => ControlMode::FixedSchedule {
                    interval_s: self.fixed_interval_s,
                },
            }),
            ControlMessage::SetThresholds { low, high } => {
                if let Ok(th) = Thresholds::new(low, high) {
                    let _ = self.session.set_thresholds(th);
                }
            }
            ControlMessage::SetArousal { .. }
            | ControlMessage::ReleaseArousal
            | ControlMessage::Start => {}
        }
        false
    }
}
