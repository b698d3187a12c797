use std::io::Write;
use std::net::{Ipv4Addr, TcpStream};

use engage_core::calibration::Thresholds;
use engage_core::config::{EngineConfig, SessionMode};
use engage_core::recording::ReplaySource;
use engage_core::session::{plan_for, LogEvent, SessionRunner};
use engage_core::synth::SynthSource;
use engage_gateway::ingest::IngestServer;
use engage_gateway::live::{LiveConfig, LiveEngine, LiveSource};

fn dda_config(duration_s: f64) -> EngineConfig {
    EngineConfig {
        mode: SessionMode::DdaOnly { duration_s },
        thresholds: Some(Thresholds::new(0.7, 1.2).unwrap()),
        ..EngineConfig::default()
    }
}

/// NDJSON for `seconds` of the synthetic player at a constant stimulus count.
fn synth_lines(seconds: f64, difficulty: u32, t0: f64) -> String {
    let cfg = EngineConfig::default();
    let mut src = SynthSource::new(3, cfg.player, &cfg.pipeline.channels, 0.25).unwrap();
    let mut out = String::new();
    for _ in 0..(seconds * 4.0) as usize {
        for s in src.next_block(difficulty) {
            let ch: Vec<String> =
                s.ch.iter()
                    .map(|v| format!("{}", f64::from(*v) * 1.000_000_1))
                    .collect();
            out.push_str(&format!(
                "{{\"t\":{},\"ch\":[{}]}}\n",
                s.t + t0,
                ch.join(",")
            ));
        }
    }
    out
}

#[test]
fn tcp_session_matches_replay_of_its_recording() {
    let dir = tempfile::tempdir().unwrap();
    let rec_path = dir.path().join("rec.csv");
    let cfg = dda_config(20.0);
    let plan = plan_for(0, &cfg.protocol, &cfg.mode);
    let server = IngestServer::bind((Ipv4Addr::LOCALHOST, 0)).unwrap();
    let addr = server.local_addr().unwrap();
    let engine = LiveEngine::launch(
        LiveConfig {
            engine: cfg.clone(),
            plan: plan.clone(),
            seed: 0,
            record: Some(rec_path.clone()),
            autostart: true,
        },
        LiveSource::Tcp(server),
    )
    .unwrap();

    let payload = synth_lines(24.0, 1, 100.0);
    let mut client = TcpStream::connect(addr).unwrap();
    for chunk in payload.as_bytes().chunks(16 * 1024) {
        client.write_all(chunk).unwrap();
        std::thread::sleep(std::time::Duration::from_millis(2));
    }
    let outcome = engine.wait().unwrap();
    drop(client);
    assert!(outcome.completed);
    assert_eq!(outcome.stats.samples_dropped, 0);
    assert_eq!(outcome.tei_dropped, 0);
    assert_eq!(outcome.log.phase_intervals().len(), 1);
    assert_eq!(outcome.log.phase_intervals()[0].1, 100.0);

    let mut replay = ReplaySource::open(&rec_path, &cfg.pipeline.channels).unwrap();
    let mut runner = SessionRunner::new(cfg, plan, 0).unwrap();
    runner.run(&mut replay).unwrap();
    assert_eq!(runner.into_log().to_jsonl(), outcome.log.to_jsonl());
}

#[test]
fn early_disconnect_leaves_incomplete_log() {
    let cfg = dda_config(60.0);
    let plan = plan_for(0, &cfg.protocol, &cfg.mode);
    let server = IngestServer::bind((Ipv4Addr::LOCALHOST, 0)).unwrap();
    let addr = server.local_addr().unwrap();
    let engine = LiveEngine::launch(
        LiveConfig {
            engine: cfg,
            plan,
            seed: 0,
            record: None,
            autostart: true,
        },
        LiveSource::Tcp(server),
    )
    .unwrap();
    let mut client = TcpStream::connect(addr).unwrap();
    client
        .write_all(synth_lines(5.0, 0, 0.0).as_bytes())
        .unwrap();
    client.write_all(b"{\"t\":5.5,\"ch\":[1]}\n").unwrap();
    drop(client);
    let outcome = engine.wait().unwrap();
    assert!(!outcome.completed);
    assert!(outcome
        .log
        .records
        .iter()
        .any(|r| matches!(&r.event, LogEvent::Dropped { reason, .. } if reason == "channel_count_mismatch")));
    assert!(outcome
        .log
        .records
        .iter()
        .any(|r| matches!(r.event, LogEvent::Tei { .. })));
}
