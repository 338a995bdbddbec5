//! The fixed four-action catalog and its one-line wire form (`"<id>[ <arg>]"`).

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One entry of the action catalog.
///
/// Ids are fixed: 1 = set dimmer, 2 = add server, 3 = remove server,
/// 4 = do nothing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", content = "argument")]
pub enum Action {
    SetDimmer(f64),
    AddServer,
    RemoveServer,
    DoNothing,
}

impl Action {
    pub const ALL_IDS: [u8; 4] = [1, 2, 3, 4];

    pub fn id(&self) -> u8 {
        match self {
            Action::SetDimmer(_) => 1,
            Action::AddServer => 2,
            Action::RemoveServer => 3,
            Action::DoNothing => 4,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Action::SetDimmer(_) => "SetDimmer",
            Action::AddServer => "AddServer",
            Action::RemoveServer => "RemoveServer",
            Action::DoNothing => "DoNothing",
        }
    }

    pub fn argument(&self) -> Option<f64> {
        match self {
            Action::SetDimmer(v) => Some(*v),
            _ => None,
        }
    }

    /// Set-dimmer action with the argument snapped to two decimals.
    pub fn set_dimmer(v: f64) -> Self {
        Action::SetDimmer(quantize_dimmer(v))
    }

    /// Human label used in prompts ("Set Dimmer", ...).
    pub fn label(id: u8) -> Option<&'static str> {
        match id {
            1 => Some("Set Dimmer"),
            2 => Some("Add Server"),
            3 => Some("Remove Server"),
            4 => Some("Do Nothing"),
            _ => None,
        }
    }
}

/// Rounds a dimmer value to two decimal places.
pub fn quantize_dimmer(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// A parsed action together with the verbatim text it was parsed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationDecision {
    #[serde(flatten)]
    pub action: Action,
    pub raw_text: String,
}

impl AdaptationDecision {
    pub fn new(action: Action, raw_text: impl Into<String>) -> Self {
        Self {
            action,
            raw_text: raw_text.into(),
        }
    }

    /// A decision whose raw text is its own canonical encoding.
    pub fn canonical(action: Action) -> Self {
        let raw = encode_action(&action);
        Self::new(action, raw)
    }

    pub fn encode(&self) -> String {
        encode_action(&self.action)
    }
}

impl fmt::Display for AdaptationDecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.encode())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecodeError {
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("action 1 (set dimmer) requires a numeric argument")]
    MissingArgument,
    #[error("dimmer argument {0} is outside [0, 1]")]
    ArgumentOutOfRange(f64),
    #[error("action {0} takes no argument")]
    SpuriousArgument(u8),
}

/// Renders the wire line without the trailing newline.
pub fn encode_action(action: &Action) -> String {
    match action {
        Action::SetDimmer(v) => format!("1 {}", quantize_dimmer(*v)),
        other => other.id().to_string(),
    }
}

pub fn encode_decision(d: &AdaptationDecision) -> String {
    encode_action(&d.action)
}

/// Strict decoder for one wire line; whitespace-separated tokens, nothing else.
pub fn decode_decision(line: &str) -> Result<AdaptationDecision, DecodeError> {
    let mut tokens = line.split_whitespace();
    let head = tokens.next().unwrap_or("");
    let id: u8 = match head.parse() {
        Ok(id) if (1..=4).contains(&id) => id,
        _ => return Err(DecodeError::UnknownAction(head.to_string())),
    };
    let arg = tokens.next();
    if id != 1 {
        if arg.is_some() {
            return Err(DecodeError::SpuriousArgument(id));
        }
        let action = match id {
            2 => Action::AddServer,
            3 => Action::RemoveServer,
            _ => Action::DoNothing,
        };
        return Ok(AdaptationDecision::new(action, line));
    }
    let value: f64 = arg
        .and_then(|a| a.parse().ok())
        .ok_or(DecodeError::MissingArgument)?;
    if tokens.next().is_some() {
        return Err(DecodeError::SpuriousArgument(id));
    }
    if !(0.0..=1.0).contains(&value) {
        return Err(DecodeError::ArgumentOutOfRange(value));
    }
    Ok(AdaptationDecision::new(Action::set_dimmer(value), line))
}
