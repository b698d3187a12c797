//! Newline-delimited JSON sample ingest over TCP.
//!
//! Each line is `{"t": <seconds>, "ch": [<µV>, ...]}`. One client is served;
//! malformed lines are counted and skipped, wrong-width samples are passed on
//! so the session can log them as dropped.

use std::io::{BufRead, BufReader};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use engage_core::signal::EegSample;
use serde::{Deserialize, Serialize};

use crate::error::{GatewayError, Result};
use crate::queue::DropOldestQueue;

pub const DEFAULT_INGEST_PORT: u16 = 7021;

/// Capacity of the ingest-to-DSP buffer, in samples.
pub const SAMPLE_QUEUE_CAPACITY: usize = 1024;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub lines_ok: u64,
    pub lines_malformed: u64,
    /// Samples evicted from a full buffer.
    pub samples_dropped: u64,
}

/// Shared monotone counters behind [`IngestStats`].
#[derive(Debug, Default)]
pub struct IngestCounters {
    lines_ok: AtomicU64,
    lines_malformed: AtomicU64,
    samples_dropped: AtomicU64,
}

impl IngestCounters {
    pub fn snapshot(&self) -> IngestStats {
        IngestStats {
            lines_ok: self.lines_ok.load(Ordering::Acquire),
            lines_malformed: self.lines_malformed.load(Ordering::Acquire),
            samples_dropped: self.samples_dropped.load(Ordering::Acquire),
        }
    }

    pub fn add_dropped(&self, n: u64) {
        self.samples_dropped.fetch_add(n, Ordering::AcqRel);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum IngestItem {
    Sample(EegSample),
    /// Parsed, but with the wrong number of channels.
    Mismatch {
        t: f64,
        got: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum LineOutcome {
    Item(IngestItem),
    Blank,
    Malformed,
}

#[derive(Deserialize)]
struct WireSample {
    t: f64,
    ch: Vec<f64>,
}

pub fn parse_line(line: &[u8], n_channels: usize) -> LineOutcome {
    let Ok(text) = std::str::from_utf8(line) else {
        return LineOutcome::Malformed;
    };
    let text = text.trim();
    if text.is_empty() {
        return LineOutcome::Blank;
    }
    let Ok(w) = serde_json::from_str::<WireSample>(text) else {
        return LineOutcome::Malformed;
    };
    if !w.t.is_finite() || w.ch.iter().any(|v| !v.is_finite()) {
        return LineOutcome::Malformed;
    }
    if w.ch.len() != n_channels {
        return LineOutcome::Item(IngestItem::Mismatch {
            t: w.t,
            got: w.ch.len(),
        });
    }
    let ch = w.ch.iter().map(|&v| v as f32).collect();
    LineOutcome::Item(IngestItem::Sample(EegSample::new(w.t, ch)))
}

/// Reads lines from `reader` into `queue` until EOF or until the queue is
/// closed by the consumer.
pub fn pump(
    reader: impl BufRead,
    n_channels: usize,
    queue: &DropOldestQueue<IngestItem>,
    counters: &IngestCounters,
) -> std::io::Result<()> {
    let mut reader = reader;
    let mut line = Vec::with_capacity(256);
    loop {
        line.clear();
        if reader.read_until(b'\n', &mut line)? == 0 {
            return Ok(());
        }
        match parse_line(&line, n_channels) {
            LineOutcome::Blank => continue,
            LineOutcome::Malformed => {
                counters.lines_malformed.fetch_add(1, Ordering::AcqRel);
            }
            LineOutcome::Item(item) => {
                counters.lines_ok.fetch_add(1, Ordering::AcqRel);
                let before = queue.dropped();
                if !queue.push(item) {
                    return Ok(());
                }
                let evicted = queue.dropped() - before;
                if evicted > 0 {
                    counters.add_dropped(evicted);
                }
            }
        }
    }
}

pub struct IngestServer {
    listener: TcpListener,
}

impl IngestServer {
    /// Port 0 picks a free port; see [`IngestServer::local_addr`].
    pub fn bind(addr: impl Into<SocketAddr>) -> Result<Self> {
        let addr = addr.into();
        let listener = TcpListener::bind(addr).map_err(|source| GatewayError::Bind {
            addr: addr.to_string(),
            source,
        })?;
        Ok(Self { listener })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    /// Accepts one client and streams it into `queue`, closing the queue when
    /// the client disconnects.
    pub fn serve_one(
        self,
        n_channels: usize,
        queue: Arc<DropOldestQueue<IngestItem>>,
        counters: Arc<IngestCounters>,
    ) -> Result<()> {
        let result = self.accept_and_pump(n_channels, &queue, &counters);
        queue.close();
        result
    }

    fn accept_and_pump(
        &self,
        n_channels: usize,
        queue: &DropOldestQueue<IngestItem>,
        counters: &IngestCounters,
    ) -> Result<()> {
        let (stream, peer): (TcpStream, _) = self.listener.accept()?;
        log::info!("ingest client connected from {peer}");
        stream.set_nodelay(true).ok();
        pump(BufReader::new(stream), n_channels, queue, counters)?;
        log::info!("ingest client {peer} disconnected");
        Ok(())
    }
}
