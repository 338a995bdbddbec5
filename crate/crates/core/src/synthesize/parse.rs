//! Turns raw engine text into a catalog decision.

use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

use crate::decision::{decode_decision, AdaptationDecision, DecodeError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("no decision found in engine output")]
    NoDecisionFound,
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

// A standalone action id, optionally followed by a number on the same line.
static DECISION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?m)(?:^|[^\w.\-])([1-4])(?:[ \t]+(-?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?))?(?:$|[^\w.]|\.(?:$|\s))",
    )
    .expect("decision pattern compiles")
});

/// Lenient parse: the first `<id>[ <number>]` token sequence anywhere in
/// `raw` is decoded. `raw_text` keeps the full engine output.
pub fn parse_response(raw: &str) -> Result<AdaptationDecision, ParseError> {
    let caps = DECISION.captures(raw).ok_or(ParseError::NoDecisionFound)?;
    let line = match caps.get(2) {
        Some(arg) => format!("{} {}", &caps[1], arg.as_str()),
        None => caps[1].to_string(),
    };
    let mut d = decode_decision(&line)?;
    d.raw_text = raw.to_string();
    Ok(d)
}

/// Strict parse: the whole trimmed output must be one wire line.
pub fn parse_response_strict(raw: &str) -> Result<AdaptationDecision, ParseError> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Err(ParseError::NoDecisionFound);
    }
    let mut d = decode_decision(trimmed)?;
    d.raw_text = raw.to_string();
    Ok(d)
}
