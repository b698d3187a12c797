//! Helpers for driving the `engage` binary.

#![allow(dead_code)]

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};
use std::time::Duration;

use engage_core::config::EngineConfig;
use engage_core::session::SYNTH_BLOCK_SECONDS;
use engage_core::synth::SynthSource;

pub fn engage() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_engage"));
    cmd.env("ENGAGE_LOG_LEVEL", "warn");
    cmd
}

pub fn run_ok(args: &[&str]) -> Output {
    let out = engage().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "engage {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// One NDJSON line per sample of the reference player at a constant
/// stimulus count.
pub fn synth_lines(seed: u64, seconds: f64, difficulty: u32) -> Vec<String> {
    let cfg = EngineConfig::default();
    let mut src = SynthSource::new(
        seed,
        cfg.player,
        &cfg.pipeline.channels,
        SYNTH_BLOCK_SECONDS,
    )
    .unwrap();
    let mut out = Vec::new();
    for _ in 0..(seconds / SYNTH_BLOCK_SECONDS) as usize {
        for s in src.next_block(difficulty) {
            let ch: Vec<String> = s.ch.iter().map(f32::to_string).collect();
            out.push(format!("{{\"t\":{},\"ch\":[{}]}}", s.t, ch.join(",")));
        }
    }
    out
}

/// Starts a command and waits for each announced address, in order.
pub fn spawn_announcing(mut cmd: Command, prefixes: &[&str]) -> (Child, Vec<String>) {
    let mut child = cmd
        .stderr(Stdio::piped())
        .stdout(Stdio::null())
        .spawn()
        .unwrap();
    let mut stderr = BufReader::new(child.stderr.take().unwrap());
    let mut found = Vec::new();
    let mut line = String::new();
    while found.len() < prefixes.len() {
        line.clear();
        assert!(
            stderr.read_line(&mut line).unwrap() > 0,
            "engage exited early"
        );
        if let Some(addr) = line.trim().strip_prefix(prefixes[found.len()]) {
            found.push(addr.to_string());
        }
    }
    // keep draining so the child never blocks on a full pipe
    std::thread::spawn(move || std::io::copy(&mut stderr, &mut std::io::sink()));
    (child, found)
}

/// Starts a command that binds an ingest port and returns it with the
/// announced address.
pub fn spawn_ingesting(cmd: Command) -> (Child, String) {
    let (child, mut addrs) = spawn_announcing(cmd, &["ingest listening on "]);
    (child, addrs.remove(0))
}

/// Sends lines in bursts paced so the pipeline keeps up. Stops early if
/// the receiver hangs up, which a finished session does.
pub fn stream_lines(addr: &str, lines: &[String], burst: usize, pause: Duration) {
    let mut client = TcpStream::connect(addr).unwrap();
    for chunk in lines.chunks(burst) {
        let mut payload = chunk.join("\n");
        payload.push('\n');
        if client.write_all(payload.as_bytes()).is_err() {
            return;
        }
        std::thread::sleep(pause);
    }
}
