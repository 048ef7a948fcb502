//! JSON Lines traces: one header line, then one [`TickRecord`] per line.

use std::io::{self, BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::TickRecord;

pub const TRACE_FORMAT: &str = "engagesim-trace";
pub const TRACE_VERSION: u32 = 1;
pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceHeader {
    pub format: String,
    pub version: u32,
    pub engine_version: String,
    pub scenario: String,
    pub scenario_hash: String,
    pub seed: u64,
}

impl TraceHeader {
    pub fn new(scenario: impl Into<String>, scenario_hash: impl Into<String>, seed: u64) -> Self {
        Self {
            format: TRACE_FORMAT.to_string(),
            version: TRACE_VERSION,
            engine_version: ENGINE_VERSION.to_string(),
            scenario: scenario.into(),
            scenario_hash: scenario_hash.into(),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub header: TraceHeader,
    pub records: Vec<TickRecord>,
}

impl Trace {
    pub fn record(&self, tick: u64) -> Option<&TickRecord> {
        self.records.iter().find(|r| r.tick == tick)
    }

    pub fn last_tick(&self) -> Option<u64> {
        self.records.last().map(|r| r.tick)
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("missing trace header")]
    MissingHeader,
    #[error("bad trace header: {0}")]
    BadHeader(String),
    #[error("not an engagesim trace (format {0:?})")]
    WrongFormat(String),
    #[error("trace version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("trace truncated at line {line}; last good tick {}", fmt_tick(.last_good_tick))]
    Truncated {
        line: usize,
        last_good_tick: Option<u64>,
    },
    #[error("trace corrupt at line {line}: {message}; last good tick {}", fmt_tick(.last_good_tick))]
    Corrupt {
        line: usize,
        message: String,
        last_good_tick: Option<u64>,
    },
}

fn fmt_tick(t: &Option<u64>) -> String {
    t.map(|t| t.to_string()).unwrap_or_else(|| "none".into())
}

pub struct TraceWriter<W: Write> {
    out: W,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(mut out: W, header: &TraceHeader) -> io::Result<Self> {
        serde_json::to_writer(&mut out, header)?;
        out.write_all(b"\n")?;
        Ok(Self { out })
    }

    pub fn write_record(&mut self, record: &TickRecord) -> io::Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

pub fn write_trace_to<W: Write>(
    out: W,
    header: &TraceHeader,
    records: &[TickRecord],
) -> io::Result<W> {
    let mut w = TraceWriter::new(out, header)?;
    for r in records {
        w.write_record(r)?;
    }
    w.finish()
}

pub fn write_trace(
    path: impl AsRef<Path>,
    header: &TraceHeader,
    records: &[TickRecord],
) -> io::Result<()> {
    let file = std::fs::File::create(path)?;
    write_trace_to(io::BufWriter::new(file), header, records)?;
    Ok(())
}

pub fn trace_to_string(header: &TraceHeader, records: &[TickRecord]) -> String {
    let bytes = write_trace_to(Vec::new(), header, records).expect("writing to memory");
    String::from_utf8(bytes).expect("json is utf-8")
}

/// Reads as much as possible. The error, if any, describes where reading
/// stopped; the returned trace holds every record before that point.
pub fn read_trace_partial<R: BufRead>(input: R) -> Result<(Trace, Option<TraceError>), TraceError> {
    let mut lines = input.split(b'\n');
    let header_line = match lines.next() {
        Some(l) => l?,
        None => return Err(TraceError::MissingHeader),
    };
    if header_line.iter().all(|b| b.is_ascii_whitespace()) {
        return Err(TraceError::MissingHeader);
    }
    let raw: serde_json::Value =
        serde_json::from_slice(&header_line).map_err(|e| TraceError::BadHeader(e.to_string()))?;
    let format = raw
        .get("format")
        .and_then(|v| v.as_str())
        .unwrap_or_default();
    if format != TRACE_FORMAT {
        return Err(TraceError::WrongFormat(format.to_string()));
    }
    let version = raw.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if version != TRACE_VERSION {
        return Err(TraceError::Version {
            found: version,
            expected: TRACE_VERSION,
        });
    }
    let header: TraceHeader =
        serde_json::from_value(raw).map_err(|e| TraceError::BadHeader(e.to_string()))?;

    let mut records: Vec<TickRecord> = Vec::new();
    let mut failure = None;
    let mut pending: Option<(usize, Vec<u8>)> = None;
    for (i, line) in lines.enumerate() {
        let line = line?;
        if let Some((n, prev)) = pending.take() {
            // a bad line followed by more input is corruption, not truncation
            failure = Some(corrupt(n, &prev, records.last().map(|r| r.tick)));
            break;
        }
        if line.is_empty() {
            continue;
        }
        match serde_json::from_slice::<TickRecord>(&line) {
            Ok(r) => records.push(r),
            Err(_) => pending = Some((i + 2, line)),
        }
    }
    if let Some((n, bad)) = pending {
        let last_good_tick = records.last().map(|r| r.tick);
        failure = Some(match serde_json::from_slice::<TickRecord>(&bad) {
            Err(e) if e.is_eof() => TraceError::Truncated {
                line: n,
                last_good_tick,
            },
            _ => corrupt(n, &bad, last_good_tick),
        });
    }
    Ok((Trace { header, records }, failure))
}

fn corrupt(line: usize, bytes: &[u8], last_good_tick: Option<u64>) -> TraceError {
    let message = match serde_json::from_slice::<TickRecord>(bytes) {
        Err(e) => e.to_string(),
        Ok(_) => "unreadable record".into(),
    };
    TraceError::Corrupt {
        line,
        message,
        last_good_tick,
    }
}

pub fn read_trace_from<R: BufRead>(input: R) -> Result<Trace, TraceError> {
    match read_trace_partial(input)? {
        (trace, None) => Ok(trace),
        (_, Some(e)) => Err(e),
    }
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<Trace, TraceError> {
    let file = std::fs::File::open(path)?;
    read_trace_from(io::BufReader::new(file))
}

pub fn read_trace_str(s: &str) -> Result<Trace, TraceError> {
    read_trace_from(s.as_bytes())
}
