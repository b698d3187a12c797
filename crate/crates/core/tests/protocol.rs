//! Whole-session behaviour on the reference synthetic player.

use engage_core::calibration::Thresholds;
use engage_core::config::{EngineConfig, SessionMode};
use engage_core::engagement::{Quality, TeiPoint};
use engage_core::pipeline::{Pipeline, PipelineConfig, PipelineOutput};
use engage_core::recording::{Recorder, ReplaySource};
use engage_core::session::{
    build_plan, percent_time_engaged, plan_for, simulate, EngagementReport, LogEvent, PhaseKind,
    SampleSource, SessionLog, SessionRunner, SYNTH_BLOCK_SECONDS,
};
use engage_core::signal::{ChannelConfig, EegSample};
use engage_core::synth::{PlayerParams, SynthSource};
use engage_core::Result;
use proptest::prelude::*;

fn events(log: &SessionLog, want: fn(&LogEvent) -> bool) -> Vec<&engage_core::session::LogRecord> {
    log.records.iter().filter(|r| want(&r.event)).collect()
}

fn spawn_times(log: &SessionLog, phase: PhaseKind) -> Vec<f64> {
    log.records
        .iter()
        .filter(|r| matches!(r.event, LogEvent::Spawn { phase: p, .. } if p == phase))
        .map(|r| r.t)
        .collect()
}

#[test]
fn plans_are_deterministic_and_reach_both_orders() {
    let mut a_first = 0;
    for seed in 0..100 {
        let plan = build_plan(seed);
        assert_eq!(plan, build_plan(seed));
        let mut d: Vec<f64> = plan.phases.iter().map(|p| p.duration_s).collect();
        d.sort_by(f64::total_cmp);
        assert_eq!(d, [180.0, 180.0, 180.0, 360.0, 360.0]);
        if plan.a_first {
            a_first += 1;
            assert_eq!(plan.phases[1].kind, PhaseKind::A);
        } else {
            assert_eq!(plan.phases[1].kind, PhaseKind::B1);
        }
    }
    assert!(
        a_first > 0 && a_first < 100,
        "{a_first} of 100 plans put A first"
    );
}

#[test]
fn reference_session_structure() {
    let log = simulate(&EngineConfig::default(), 42).unwrap();
    let intervals = log.phase_intervals();
    assert_eq!(intervals.len(), 5);
    for (kind, start, end) in &intervals {
        let expected = match kind {
            PhaseKind::A | PhaseKind::B3 => 360.0,
            _ => 180.0,
        };
        assert_eq!(end - start, expected, "{kind}");
    }
    // exhaustive and non-overlapping
    assert!(intervals.windows(2).all(|w| w[0].2 == w[1].1));

    assert!(spawn_times(&log, PhaseKind::B1).is_empty());
    assert!(spawn_times(&log, PhaseKind::Familiarization).is_empty());
    let a = spawn_times(&log, PhaseKind::A);
    assert_eq!(a.len(), 24);
    assert!(a.windows(2).all(|w| w[1] - w[0] == 15.0));
    let b2 = spawn_times(&log, PhaseKind::B2);
    assert_eq!(b2.len(), 36);
    assert!(b2.windows(2).all(|w| w[1] - w[0] == 5.0));

    let th = log.thresholds().unwrap();
    assert!(th.low < th.high);
    assert!(log.records.windows(2).all(|w| w[0].t <= w[1].t));
}

#[test]
fn closed_loop_actions_follow_out_of_band_points() {
    for seed in [1, 42] {
        let log = simulate(&EngineConfig::default(), seed).unwrap();
        let th = log.thresholds().unwrap();
        let mut last_tei = None;
        for r in &log.records {
            match r.event {
                LogEvent::Tei { tei, .. } => last_tei = Some((r.t, tei)),
                LogEvent::Spawn {
                    phase: PhaseKind::B3,
                    ..
                } => {
                    let (t, v) = last_tei.unwrap();
                    assert!(t == r.t && v < th.low, "spawn at {} after tei {v}", r.t);
                }
                LogEvent::Despawn {
                    phase: PhaseKind::B3,
                    ..
                } => {
                    let (t, v) = last_tei.unwrap();
                    assert!(t == r.t && v > th.high, "despawn at {} after tei {v}", r.t);
                }
                _ => {}
            }
        }
    }
}

#[test]
fn simulation_is_byte_deterministic() {
    let cfg = EngineConfig::default();
    let a = simulate(&cfg, 7).unwrap().to_jsonl();
    let b = simulate(&cfg, 7).unwrap().to_jsonl();
    assert_eq!(a, b);
    assert_ne!(a, simulate(&cfg, 8).unwrap().to_jsonl());
}

#[test]
fn dda_beats_fixed_schedule_on_reference_player() {
    let r = EngagementReport::from_log(&simulate(&EngineConfig::default(), 3).unwrap());
    let (a, b3) = (
        r.percent(PhaseKind::A).unwrap(),
        r.percent(PhaseKind::B3).unwrap(),
    );
    assert!(b3 > a + 0.10, "A {a} B3 {b3}");
    assert!(r
        .phases
        .iter()
        .all(|p| p.percent_engaged.is_none_or(|x| (0.0..=1.0).contains(&x))));
}

/// Passes synthetic blocks through while keeping a copy.
struct Tee {
    inner: SynthSource,
    seen: Vec<EegSample>,
}

impl SampleSource for Tee {
    fn next_batch(&mut self, active: u32) -> Result<Option<Vec<EegSample>>> {
        let batch = self.inner.next_batch(active)?;
        if let Some(b) = &batch {
            self.seen.extend(b.iter().cloned());
        }
        Ok(batch)
    }
}

#[test]
fn replayed_recording_reproduces_log() {
    let cfg = EngineConfig {
        mode: SessionMode::DdaOnly { duration_s: 90.0 },
        thresholds: Some(Thresholds::new(0.7, 1.2).unwrap()),
        ..EngineConfig::default()
    };
    let plan = plan_for(5, &cfg.protocol, &cfg.mode);
    let channels = cfg.pipeline.channels.clone();
    let mut tee = Tee {
        inner: SynthSource::new(5, cfg.player, &channels, SYNTH_BLOCK_SECONDS).unwrap(),
        seen: Vec::new(),
    };
    let mut live = SessionRunner::new(cfg.clone(), plan.clone(), 5).unwrap();
    live.run(&mut tee).unwrap();
    let live_log = live.into_log();

    let mut rec = Recorder::new(Vec::new(), &channels).unwrap();
    for s in &tee.seen {
        rec.record(s).unwrap();
    }
    let csv = rec.into_inner().unwrap();
    let mut replay = ReplaySource::new(csv.as_slice(), &channels).unwrap();
    let mut again = SessionRunner::new(cfg, plan, 5).unwrap();
    again.run(&mut replay).unwrap();
    assert_eq!(again.into_log().to_jsonl(), live_log.to_jsonl());
    assert!(!events(&live_log, |e| matches!(e, LogEvent::Spawn { .. })).is_empty());
}

#[test]
fn bad_samples_become_dropped_events() {
    let cfg = EngineConfig {
        mode: SessionMode::DdaOnly { duration_s: 10.0 },
        thresholds: Some(Thresholds::new(0.7, 1.2).unwrap()),
        ..EngineConfig::default()
    };
    let plan = plan_for(0, &cfg.protocol, &cfg.mode);
    let mut runner = SessionRunner::new(cfg.clone(), plan, 0).unwrap();
    let mut src = SynthSource::new(0, cfg.player, &cfg.pipeline.channels, 0.25).unwrap();
    let block = src.next_block(0);
    runner.feed(&block[0]).unwrap();
    runner.feed(&EegSample::new(0.5, vec![1.0])).unwrap();
    runner.feed(&EegSample::new(-1.0, vec![0.0; 4])).unwrap();
    for s in &block[1..] {
        runner.feed(s).unwrap();
    }
    let log = runner.into_log();
    let reasons: Vec<String> = log
        .records
        .iter()
        .filter_map(|r| match &r.event {
            LogEvent::Dropped { reason, .. } => Some(reason.clone()),
            _ => None,
        })
        .collect();
    assert_eq!(
        reasons,
        ["channel_count_mismatch", "non_monotone_timestamp"]
    );
    assert!(log.records.windows(2).all(|w| w[0].t <= w[1].t));
}

#[test]
fn reference_player_is_controllable() {
    let player = PlayerParams {
        noise_sigma: 0.0,
        ..PlayerParams::default()
    };
    let cfg = EngineConfig {
        player,
        ..EngineConfig::default()
    };
    let th = simulate(&cfg, 9).unwrap().thresholds().unwrap();
    let d = (0..=8)
        .find(|&d| th.contains(player.tei_for(player.equilibrium_arousal(d))))
        .expect("some constant difficulty lands in band");

    // hold it for four minutes through the real pipeline
    let channels = ChannelConfig::default();
    let mut src = SynthSource::new(9, player, &channels, SYNTH_BLOCK_SECONDS).unwrap();
    let mut pipe = Pipeline::new(PipelineConfig::default()).unwrap();
    let mut late = Vec::new();
    for _ in 0..(240 * 4) {
        for s in src.next_block(d) {
            if let Some(PipelineOutput::Point { point, .. }) = pipe.push_sample(&s).unwrap() {
                if point.t >= 60.0 {
                    late.push(point);
                }
            }
        }
    }
    assert_eq!(percent_time_engaged(&late, &th).unwrap(), 1.0);
}

fn pt(v: f64) -> TeiPoint {
    TeiPoint {
        t: 0.0,
        raw: v,
        smoothed: v,
        quality: Quality::Clean,
    }
}

proptest! {
    #[test]
    fn metric_invariant_under_monotone_transform(vals in prop::collection::vec(0.01f64..5.0, 1..200), lo in 0.01f64..2.0, width in 0.01f64..3.0) {
        let th = Thresholds::new(lo, lo + width).unwrap();
        let f = |v: f64| v.ln() * 3.0 + v.powi(3);
        let th_f = Thresholds { low: f(th.low), high: f(th.high) };
        let pts: Vec<TeiPoint> = vals.iter().map(|&v| pt(v)).collect();
        let pts_f: Vec<TeiPoint> = vals.iter().map(|&v| pt(f(v))).collect();
        let a = percent_time_engaged(&pts, &th).unwrap();
        let b = percent_time_engaged(&pts_f, &th_f).unwrap();
        prop_assert_eq!(a, b);
        prop_assert!((0.0..=1.0).contains(&a));
    }
}
