//! Piecewise-constant arrival-rate traces.
//!
//! A trace is a list of `(start_s, rate_rps)` segments; each segment lasts
//! until the next one starts and the last one never ends. A trailing
//! zero-rate segment therefore marks the end of the workload, and its start
//! is the trace duration.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::short_hash;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace io: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("trace is empty")]
    Empty,
    #[error("first segment must start at 0, got {0}")]
    BadOrigin(f64),
    #[error("segment starts must strictly increase (row {0})")]
    NotIncreasing(usize),
    #[error("negative or non-finite rate at row {0}")]
    BadRate(usize),
    #[error("unknown trace kind `{0}`")]
    UnknownKind(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    #[serde(rename = "start_s")]
    pub start: f64,
    #[serde(rename = "rate_rps")]
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalTrace {
    name: String,
    segments: Vec<Segment>,
}

impl ArrivalTrace {
    pub fn new(name: impl Into<String>, segments: Vec<Segment>) -> Result<Self, TraceError> {
        let first = segments.first().ok_or(TraceError::Empty)?;
        if first.start != 0.0 {
            return Err(TraceError::BadOrigin(first.start));
        }
        for (i, s) in segments.iter().enumerate() {
            if !(s.rate >= 0.0 && s.rate.is_finite()) {
                return Err(TraceError::BadRate(i + 1));
            }
            if i > 0 && !(s.start > segments[i - 1].start) {
                return Err(TraceError::NotIncreasing(i + 1));
            }
        }
        Ok(Self {
            name: name.into(),
            segments,
        })
    }

    /// Constant rate forever.
    pub fn constant(rate: f64) -> Self {
        Self::new(
            format!("constant-{rate}"),
            vec![Segment { start: 0.0, rate }],
        )
        .expect("valid constant trace")
    }

    /// No arrivals at all.
    pub fn empty() -> Self {
        Self::constant(0.0)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Stable identifier: name plus a hash of the CSV contents.
    pub fn id(&self) -> String {
        format!("{}:{}", self.name, short_hash(&self.to_csv_string()))
    }

    /// Start of the trailing zero-rate segment, if the trace has one.
    pub fn duration(&self) -> Option<f64> {
        let last = self.segments.last()?;
        (last.rate == 0.0 && self.segments.len() > 1).then_some(last.start)
    }

    /// Index of the segment covering time `t`.
    pub fn segment_at(&self, t: f64) -> usize {
        self.segments
            .partition_point(|s| s.start <= t)
            .saturating_sub(1)
    }

    pub fn rate_at(&self, t: f64) -> f64 {
        self.segments[self.segment_at(t)].rate
    }

    /// End of segment `idx` (infinity for the last one).
    pub fn segment_end(&self, idx: usize) -> f64 {
        self.segments
            .get(idx + 1)
            .map_or(f64::INFINITY, |s| s.start)
    }

    pub fn from_reader(name: impl Into<String>, reader: impl Read) -> Result<Self, TraceError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let segments = rdr
            .deserialize::<Segment>()
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(name, segments)
    }

    pub fn load(path: &Path) -> Result<Self, TraceError> {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "trace".to_string());
        Self::from_reader(name, std::fs::File::open(path)?)
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<(), TraceError> {
        let mut wtr = csv::Writer::from_writer(writer);
        for s in &self.segments {
            wtr.serialize(s)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn save(&self, path: &Path) -> Result<(), TraceError> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Generates a named synthetic trace.
    pub fn generate(kind: &str) -> Result<Self, TraceError> {
        match kind {
            "worldcup-like" => Ok(worldcup_like()),
            other => Err(TraceError::UnknownKind(other.to_string())),
        }
    }
}

/// 105 simulated minutes in 100 s steps: a ramp from 5 to 45 req/s over the
/// first 50 minutes, a 10-minute plateau, then a decay to about 9 req/s. Eight
/// minutes into the decay's second third the rate jumps to 2.5x its current
/// value for 8 minutes.
pub fn worldcup_like() -> ArrivalTrace {
    const STEP: f64 = 100.0;
    const PEAK: f64 = 45.0;
    const DECAY_START: f64 = 3600.0;
    const END: f64 = 6300.0;
    const SPIKE_START: f64 = 4600.0;
    const SPIKE_LEN: f64 = 480.0;
    let round = |r: f64| (r * 100.0).round() / 100.0;
    let decay = |t: f64| PEAK - (PEAK - 10.0) * ((t - DECAY_START) / STEP + 1.0) / 27.0;
    let mut segments = Vec::new();
    let mut push = |start: f64, rate: f64| {
        segments.push(Segment {
            start,
            rate: round(rate),
        })
    };
    for i in 0..30 {
        push(i as f64 * STEP, 5.0 + (PEAK - 5.0) * i as f64 / 29.0);
    }
    push(3000.0, PEAK);
    let mut t = DECAY_START;
    while t < END {
        if t == SPIKE_START {
            push(t, round(decay(t)) * 2.5);
            t += SPIKE_LEN;
        } else {
            push(t, decay(t));
            t += STEP;
        }
    }
    push(END, 0.0);
    ArrivalTrace::new("worldcup-like", segments).expect("generated trace is valid")
}
