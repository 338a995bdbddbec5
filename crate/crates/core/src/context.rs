//! Monitored system state for one control period.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decision::Action;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextSnapshot {
    pub dimmer: f64,
    /// Active plus booting servers, as the probe reports them.
    pub active_servers: u32,
    pub max_servers: u32,
    /// Mean busy fraction across active servers, clamped to [0, 1].
    pub utilization: f64,
    /// Mean response time (s) of requests completed in the window.
    pub avg_response_time: f64,
    /// Requests per second that arrived during the window.
    pub arrival_rate: f64,
    pub sim_time: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SnapshotParseError {
    #[error("missing key `{0}`")]
    MissingKey(&'static str),
    #[error("bad value for `{key}`: `{value}`")]
    BadValue { key: String, value: String },
}

const KEYS: [&str; 7] = [
    "dimmer",
    "active_servers",
    "utilization",
    "avg_response_time",
    "arrival_rate",
    "time",
    "max_servers",
];

impl ContextSnapshot {
    /// Renders the `key: value` block. Counts are printed with one decimal
    /// ("2.0"), the rest in shortest round-trip form.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "dimmer: {}", self.dimmer);
        let _ = writeln!(out, "active_servers: {:.1}", self.active_servers as f64);
        let _ = writeln!(out, "utilization: {}", self.utilization);
        let _ = writeln!(out, "avg_response_time: {}", self.avg_response_time);
        let _ = writeln!(out, "arrival_rate: {}", self.arrival_rate);
        let _ = writeln!(out, "time: {}", self.sim_time);
        let _ = write!(out, "max_servers: {:.1}", self.max_servers as f64);
        out
    }

    /// Parses the first complete block of `key: value` lines found in `text`.
    /// Unrelated lines are skipped.
    pub fn parse_block(text: &str) -> Result<Self, SnapshotParseError> {
        let mut values: [Option<f64>; 7] = [None; 7];
        for line in text.lines() {
            let Some((key, value)) = line.split_once(':') else {
                continue;
            };
            let key = key.trim().trim_start_matches("- ");
            let Some(idx) = KEYS.iter().position(|k| *k == key) else {
                continue;
            };
            let value = value.trim();
            let parsed: f64 = value.parse().map_err(|_| SnapshotParseError::BadValue {
                key: key.to_string(),
                value: value.to_string(),
            })?;
            if values[idx].is_none() {
                values[idx] = Some(parsed);
            }
        }
        let get = |i: usize| values[i].ok_or(SnapshotParseError::MissingKey(KEYS[i]));
        let count = |i: usize| -> Result<u32, SnapshotParseError> {
            let v = get(i)?;
            if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
                return Err(SnapshotParseError::BadValue {
                    key: KEYS[i].to_string(),
                    value: v.to_string(),
                });
            }
            Ok(v as u32)
        };
        Ok(Self {
            dimmer: get(0)?,
            active_servers: count(1)?,
            utilization: get(2)?,
            avg_response_time: get(3)?,
            arrival_rate: get(4)?,
            sim_time: get(5)?,
            max_servers: count(6)?,
        })
    }

    pub fn at_capacity(&self) -> bool {
        self.active_servers >= self.max_servers
    }
}

/// The "Actions you can take" list, one numbered line per catalog entry.
pub fn render_actions() -> String {
    Action::ALL_IDS
        .iter()
        .map(|&id| format!("{id}. {} (A{id})", Action::label(id).unwrap_or("?")))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Adaptation goals in fixed priority order: response time, then dimmer,
/// then server count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub rt_threshold: f64,
}

impl Objective {
    pub fn new(rt_threshold: f64) -> Self {
        assert!(
            rt_threshold > 0.0,
            "response-time threshold must be positive"
        );
        Self { rt_threshold }
    }

    pub fn render(&self) -> String {
        format!(
            "1. Primary: minimize mean response time; it must stay at or under {} seconds.\n\
             2. Secondary: serve optional content to as many requests as you can (high dimmer).\n\
             3. Tertiary: run the smallest pool that meets goals 1 and 2.\n\
             Earlier goals win over later ones.",
            self.rt_threshold
        )
    }
}
