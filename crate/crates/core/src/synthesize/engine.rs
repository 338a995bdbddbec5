//! Decision engines: a chat-completion HTTP client, a rule-based stand-in,
//! and transcript replay.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use super::prompt::{Prompt, Role};
use crate::context::ContextSnapshot;
use crate::decision::{encode_action, Action};

/// Environment variable holding the bearer token for [`HttpChat`].
pub const API_KEY_ENV: &str = "MSEK_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    HttpChat,
    MockOracle,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub kind: EngineKind,
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub timeout_s: f64,
    pub max_retries: u32,
    /// First retry waits this long; each further retry doubles it.
    pub backoff_s: f64,
    /// Transcript read by `Replay`.
    pub transcript: Option<PathBuf>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            kind: EngineKind::MockOracle,
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4o-mini".into(),
            temperature: 0.0,
            timeout_s: 60.0,
            max_retries: 3,
            backoff_s: 0.5,
            transcript: None,
        }
    }
}

impl EngineConfig {
    pub fn of_kind(kind: EngineKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    /// Checks ranges; the request timeout must fit inside one control period.
    pub fn validate(&self, control_period: f64) -> Result<(), EngineError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(EngineError::Config(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if !(self.timeout_s > 0.0 && self.timeout_s < control_period) {
            return Err(EngineError::Config(format!(
                "timeout {} s must be positive and below the {} s control period",
                self.timeout_s, control_period
            )));
        }
        if !(self.backoff_s >= 0.0) {
            return Err(EngineError::Config("negative backoff".into()));
        }
        if self.kind == EngineKind::Replay && self.transcript.is_none() {
            return Err(EngineError::Config("replay needs a transcript path".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("engine did not answer in time")]
    EngineTimeout,
    #[error("engine returned HTTP {0}")]
    EngineHttpError(u16),
    #[error("replay transcript exhausted after {0} outputs")]
    ReplayExhausted(usize),
    #[error("engine transport: {0}")]
    Transport(String),
    #[error("malformed engine response: {0}")]
    BadResponse(String),
    #[error("engine config: {0}")]
    Config(String),
    #[error("engine io: {0}")]
    Io(#[from] std::io::Error),
}

pub trait Engine {
    /// Returns the raw text of one reply.
    fn invoke(&mut self, prompt: &Prompt) -> Result<String, EngineError>;

    fn kind(&self) -> EngineKind;
}

impl<E: Engine + ?Sized> Engine for Box<E> {
    fn invoke(&mut self, prompt: &Prompt) -> Result<String, EngineError> {
        (**self).invoke(prompt)
    }

    fn kind(&self) -> EngineKind {
        (**self).kind()
    }
}

/// The rule table behind [`MockOracle`], first match wins.
pub fn oracle_rule(c: &ContextSnapshot, rt_threshold: f64) -> Action {
    let rt = c.avg_response_time;
    if rt > rt_threshold {
        if c.active_servers < c.max_servers {
            return Action::AddServer;
        }
        if c.dimmer > 0.1 {
            return Action::set_dimmer(c.dimmer - 0.1);
        }
    } else if rt <= rt_threshold / 2.0 {
        if c.dimmer < 1.0 {
            return Action::set_dimmer((c.dimmer + 0.1).min(1.0));
        }
        if c.utilization < 0.4 && c.active_servers > 1 {
            return Action::RemoveServer;
        }
    }
    Action::DoNothing
}

/// Deterministic stand-in for a language model. Reads the status block of
/// the latest user turn and answers with [`oracle_rule`].
#[derive(Debug, Clone)]
pub struct MockOracle {
    pub rt_threshold: f64,
}

impl MockOracle {
    pub fn new(rt_threshold: f64) -> Self {
        Self { rt_threshold }
    }

    pub fn decide(&self, c: &ContextSnapshot) -> String {
        encode_action(&oracle_rule(c, self.rt_threshold))
    }
}

/// The most recent snapshot rendered into a user turn of `prompt`.
pub fn current_context(prompt: &Prompt) -> Option<ContextSnapshot> {
    prompt
        .messages
        .iter()
        .rev()
        .filter(|m| m.role == Role::User)
        .find_map(|m| {
            let at = m.content.find("Status:")?;
            ContextSnapshot::parse_block(&m.content[at..]).ok()
        })
}

impl Engine for MockOracle {
    fn invoke(&mut self, prompt: &Prompt) -> Result<String, EngineError> {
        Ok(match current_context(prompt) {
            Some(c) => self.decide(&c),
            None => encode_action(&Action::DoNothing),
        })
    }

    fn kind(&self) -> EngineKind {
        EngineKind::MockOracle
    }
}

/// Escapes one engine output onto a single transcript line.
pub fn escape_line(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for ch in raw.chars() {
        match ch {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

pub fn unescape_line(line: &str) -> String {
    let mut out = String::with_capacity(line.len());
    let mut chars = line.chars();
    while let Some(ch) = chars.next() {
        if ch != '\\' {
            out.push(ch);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some('\\') => out.push('\\'),
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}

/// Plays back recorded outputs, one per call.
#[derive(Debug, Clone)]
pub struct Replay {
    outputs: Vec<String>,
    next: usize,
}

impl Replay {
    pub fn new(outputs: Vec<String>) -> Self {
        Self { outputs, next: 0 }
    }

    pub fn from_text(text: &str) -> Self {
        Self::new(text.lines().map(unescape_line).collect())
    }

    pub fn load(path: &Path) -> Result<Self, EngineError> {
        Ok(Self::from_text(&std::fs::read_to_string(path)?))
    }

    pub fn remaining(&self) -> usize {
        self.outputs.len() - self.next
    }
}

impl Engine for Replay {
    fn invoke(&mut self, _prompt: &Prompt) -> Result<String, EngineError> {
        let out = self
            .outputs
            .get(self.next)
            .cloned()
            .ok_or(EngineError::ReplayExhausted(self.outputs.len()))?;
        self.next += 1;
        Ok(out)
    }

    fn kind(&self) -> EngineKind {
        EngineKind::Replay
    }
}

/// Blocking chat-completion client.
pub struct HttpChat {
    cfg: EngineConfig,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

enum Attempt {
    Retry(EngineError),
    Fail(EngineError),
}

impl HttpChat {
    pub fn new(cfg: EngineConfig) -> Result<Self, EngineError> {
        let api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::with_api_key(cfg, api_key)
    }

    pub fn with_api_key(cfg: EngineConfig, api_key: Option<String>) -> Result<Self, EngineError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(cfg.timeout_s))
            .build()
            .map_err(|e| EngineError::Transport(e.to_string()))?;
        Ok(Self {
            cfg,
            client,
            api_key,
        })
    }

    pub fn request_body(&self, prompt: &Prompt) -> serde_json::Value {
        json!({
            "model": self.cfg.model,
            "temperature": self.cfg.temperature,
            "messages": prompt.messages,
        })
    }

    fn attempt(&self, body: &serde_json::Value) -> Result<String, Attempt> {
        let mut req = self.client.post(&self.cfg.endpoint).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                Attempt::Retry(EngineError::EngineTimeout)
            } else {
                Attempt::Retry(EngineError::Transport(e.to_string()))
            }
        })?;
        let status = resp.status();
        if !status.is_success() {
            return Err(Attempt::Fail(EngineError::EngineHttpError(status.as_u16())));
        }
        let parsed: ChatResponse = resp.json().map_err(|e| {
            if e.is_timeout() {
                Attempt::Retry(EngineError::EngineTimeout)
            } else {
                Attempt::Fail(EngineError::BadResponse(e.to_string()))
            }
        })?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| {
                Attempt::Fail(EngineError::BadResponse(
                    "no choices[0].message.content".into(),
                ))
            })
    }
}

impl Engine for HttpChat {
    fn invoke(&mut self, prompt: &Prompt) -> Result<String, EngineError> {
        let body = self.request_body(prompt);
        let mut attempt = 0;
        loop {
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(Attempt::Fail(e)) => return Err(e),
                Err(Attempt::Retry(e)) if attempt >= self.cfg.max_retries => return Err(e),
                Err(Attempt::Retry(e)) => {
                    let wait = self.cfg.backoff_s * 2f64.powi(attempt as i32);
                    log::warn!(
                        "engine attempt {} failed ({e}), retrying in {wait:.2} s",
                        attempt + 1
                    );
                    std::thread::sleep(Duration::from_secs_f64(wait));
                    attempt += 1;
                }
            }
        }
    }

    fn kind(&self) -> EngineKind {
        EngineKind::HttpChat
    }
}

/// Builds the engine described by `cfg`.
pub fn build_engine(
    cfg: &EngineConfig,
    rt_threshold: f64,
) -> Result<Box<dyn Engine + Send>, EngineError> {
    Ok(match cfg.kind {
        EngineKind::MockOracle => Box::new(MockOracle::new(rt_threshold)),
        EngineKind::Replay => {
            let path = cfg
                .transcript
                .as_deref()
                .ok_or_else(|| EngineError::Config("replay needs a transcript path".into()))?;
            Box::new(Replay::load(path)?)
        }
        EngineKind::HttpChat => Box::new(HttpChat::new(cfg.clone())?),
    })
}

/// Wraps an engine and keeps every output it produced, optionally appending
/// each one to a transcript file as it arrives.
pub struct Recorder<E> {
    inner: E,
    outputs: Vec<String>,
    file: Option<File>,
}

impl<E: Engine> Recorder<E> {
    pub fn new(inner: E) -> Self {
        Self {
            inner,
            outputs: Vec::new(),
            file: None,
        }
    }

    /// Also writes to `path`, truncating it first.
    pub fn to_file(inner: E, path: &Path) -> Result<Self, EngineError> {
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(path)?;
        Ok(Self {
            inner,
            outputs: Vec::new(),
            file: Some(file),
        })
    }

    pub fn outputs(&self) -> &[String] {
        &self.outputs
    }

    /// The recorded outputs in transcript form.
    pub fn transcript(&self) -> String {
        self.outputs.iter().map(|o| escape_line(o) + "\n").collect()
    }

    pub fn into_inner(self) -> E {
        self.inner
    }
}

impl<E: Engine> Engine for Recorder<E> {
    fn invoke(&mut self, prompt: &Prompt) -> Result<String, EngineError> {
        let out = self.inner.invoke(prompt)?;
        if let Some(f) = &mut self.file {
            writeln!(f, "{}", escape_line(&out))?;
            f.flush()?;
        }
        self.outputs.push(out.clone());
        Ok(out)
    }

    fn kind(&self) -> EngineKind {
        self.inner.kind()
    }
}

/// Reads a transcript file into raw outputs.
pub fn read_transcript(path: &Path) -> Result<Vec<String>, EngineError> {
    let mut out = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        out.push(unescape_line(&line?));
    }
    Ok(out)
}
