//! CSV recording and replay of sample streams.
//!
//! Layout is a `t,<channel>...` header followed by one row per sample.
//! Channel values are written as the shortest decimal that reads back to the
//! same `f32` (at most 9 significant digits); timestamps use the shortest
//! `f64` form so replayed epochs line up exactly.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::session::SampleSource;
use crate::signal::{ChannelConfig, EegSample};

fn header_for(cfg: &ChannelConfig) -> Vec<String> {
    std::iter::once("t".to_string())
        .chain(cfg.names.iter().cloned())
        .collect()
}

pub struct Recorder<W: Write> {
    writer: csv::Writer<W>,
    n_channels: usize,
    row: Vec<String>,
}

impl<W: Write> Recorder<W> {
    pub fn new(w: W, cfg: &ChannelConfig) -> Result<Self> {
        let mut writer = csv::Writer::from_writer(w);
        writer.write_record(header_for(cfg))?;
        Ok(Self {
            writer,
            n_channels: cfg.channel_count(),
            row: Vec::with_capacity(cfg.channel_count() + 1),
        })
    }

    pub fn record(&mut self, s: &EegSample) -> Result<()> {
        if s.ch.len() != self.n_channels {
            return Err(Error::ChannelCountMismatch {
                expected: self.n_channels,
                got: s.ch.len(),
            });
        }
        self.row.clear();
        self.row.push(s.t.to_string());
        self.row.extend(s.ch.iter().map(f32::to_string));
        self.writer.write_record(&self.row)?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.writer.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> Result<W> {
        self.writer
            .into_inner()
            .map_err(|e| Error::IoFailure(std::io::Error::other(e.to_string())))
    }
}

impl Recorder<File> {
    pub fn create(path: &Path, cfg: &ChannelConfig) -> Result<Self> {
        Self::new(File::create(path)?, cfg)
    }
}

pub fn record(samples: &[EegSample], path: &Path, cfg: &ChannelConfig) -> Result<()> {
    let mut rec = Recorder::create(path, cfg)?;
    for s in samples {
        rec.record(s)?;
    }
    rec.flush()
}

/// Reads a recording back as a [`SampleSource`].
pub struct ReplaySource<R: Read> {
    reader: csv::Reader<R>,
    n_channels: usize,
    batch: usize,
    row: usize,
    record: csv::StringRecord,
}

impl<R: Read> ReplaySource<R> {
    pub fn new(r: R, cfg: &ChannelConfig) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(r);
        let found = reader.headers()?.clone();
        if found.is_empty() {
            return Err(Error::EmptyRecording);
        }
        let expected = header_for(cfg);
        if found.iter().ne(expected.iter().map(String::as_str)) {
            return Err(Error::HeaderMismatch {
                expected: expected.join(","),
                found: found.iter().collect::<Vec<_>>().join(","),
            });
        }
        Ok(Self {
            reader,
            n_channels: cfg.channel_count(),
            batch: 256,
            row: 0,
            record: csv::StringRecord::new(),
        })
    }

    fn parse_row(&self) -> Result<EegSample> {
        let row = self.row;
        let bad = |reason: String| Error::MalformedRecording { row, reason };
        if self.record.len() != self.n_channels + 1 {
            return Err(bad(format!(
                "{} fields, expected {}",
                self.record.len(),
                self.n_channels + 1
            )));
        }
        let t: f64 = self.record[0]
            .trim()
            .parse()
            .map_err(|e| bad(format!("t: {e}")))?;
        let ch = self
            .record
            .iter()
            .skip(1)
            .map(|v| {
                v.trim()
                    .parse::<f32>()
                    .map_err(|e| bad(format!("`{v}`: {e}")))
            })
            .collect::<Result<Vec<f32>>>()?;
        Ok(EegSample::new(t, ch))
    }

    /// Next sample, or `None` at end of file.
    pub fn next_sample(&mut self) -> Result<Option<EegSample>> {
        if !self.reader.read_record(&mut self.record)? {
            if self.row == 0 {
                return Err(Error::EmptyRecording);
            }
            return Ok(None);
        }
        self.row += 1;
        self.parse_row().map(Some)
    }

    pub fn read_all(mut self) -> Result<Vec<EegSample>> {
        let mut out = Vec::new();
        while let Some(s) = self.next_sample()? {
            out.push(s);
        }
        Ok(out)
    }
}

impl ReplaySource<File> {
    pub fn open(path: &Path, cfg: &ChannelConfig) -> Result<Self> {
        Self::new(File::open(path)?, cfg)
    }
}

impl<R: Read> SampleSource for ReplaySource<R> {
    /// Recordings are open loop; the stimulus count is ignored.
    fn next_batch(&mut self, _active_stimuli: u32) -> Result<Option<Vec<EegSample>>> {
        let mut out = Vec::with_capacity(self.batch);
        while out.len() < self.batch {
            match self.next_sample()? {
                Some(s) => out.push(s),
                None => break,
            }
        }
        Ok((!out.is_empty()).then_some(out))
    }
}

pub fn replay(path: &Path, cfg: &ChannelConfig) -> Result<Vec<EegSample>> {
    ReplaySource::open(path, cfg)?.read_all()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples(n: usize) -> Vec<EegSample> {
        (0..n)
            .map(|i| {
                let t = i as f64 / 256.0;
                let v = |k: f64| ((t * 37.0 + k).sin() * 87.654321) as f32;
                EegSample::new(t, vec![v(0.0), v(1.0), v(2.0), 1e-7])
            })
            .collect()
    }

    #[test]
    fn round_trip_is_exact() {
        let cfg = ChannelConfig::default();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rec.csv");
        let s = samples(1000);
        record(&s, &path, &cfg).unwrap();
        assert_eq!(replay(&path, &cfg).unwrap(), s);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t,TP9,Fp1,Fp2,TP10\n0,"));
    }

    #[test]
    fn header_must_match() {
        let cfg = ChannelConfig::default();
        let err = ReplaySource::new("t,Fp1\n0,1\n".as_bytes(), &cfg)
            .err()
            .unwrap();
        assert!(matches!(err, Error::HeaderMismatch { .. }));
    }

    #[test]
    fn empty_inputs() {
        let cfg = ChannelConfig::default();
        assert!(matches!(
            ReplaySource::new("".as_bytes(), &cfg).err().unwrap(),
            Error::EmptyRecording
        ));
        let header_only = ReplaySource::new("t,TP9,Fp1,Fp2,TP10\n".as_bytes(), &cfg).unwrap();
        assert!(matches!(header_only.read_all(), Err(Error::EmptyRecording)));
    }

    #[test]
    fn missing_file_is_io_failure() {
        let err = replay(
            Path::new("/nonexistent/missing.csv"),
            &ChannelConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::IoFailure(_)));
    }

    #[test]
    fn bad_cell_reports_row() {
        let cfg = ChannelConfig::default();
        let src = ReplaySource::new(
            "t,TP9,Fp1,Fp2,TP10\n0,1,2,3,4\n0.1,1,x,3,4\n".as_bytes(),
            &cfg,
        )
        .unwrap();
        assert!(matches!(
            src.read_all(),
            Err(Error::MalformedRecording { row: 2, .. })
        ));
    }
}
