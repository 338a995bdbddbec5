//! Synthesize stage: prompt generation, engine invocation, reply parsing.

mod engine;
mod parse;
mod prompt;

pub use engine::{
    build_engine, current_context, escape_line, oracle_rule, read_transcript, unescape_line,
    Engine, EngineConfig, EngineError, EngineKind, HttpChat, MockOracle, Recorder, Replay,
    API_KEY_ENV,
};
pub use parse::{parse_response, parse_response_strict, ParseError};
pub use prompt::{
    estimate_messages, estimate_tokens, generate_prompt, generate_prompt_with_feedback, Message,
    Prompt, PromptError, Role,
};

use thiserror::Error;

use crate::context::ContextSnapshot;
use crate::decision::AdaptationDecision;
use crate::knowledge::Knowledge;

#[derive(Debug, Error)]
pub enum SynthesizeError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// One pass through the stage.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub raw: String,
    pub decision: Result<AdaptationDecision, ParseError>,
    pub token_estimate: usize,
    pub history_included: usize,
}

/// Builds the prompt for `c` from `knowledge`, asks `engine`, parses the reply.
/// `feedback` turns go after the context message.
pub fn synthesize(
    c: &ContextSnapshot,
    knowledge: &Knowledge,
    engine: &mut dyn Engine,
    feedback: &[Message],
) -> Result<Synthesis, SynthesizeError> {
    let prompt = generate_prompt_with_feedback(
        c,
        &knowledge.history,
        &knowledge.template,
        knowledge.config.token_budget,
        feedback,
    )?;
    let raw = engine.invoke(&prompt)?;
    Ok(Synthesis {
        decision: parse_response(&raw),
        raw,
        token_estimate: prompt.token_estimate,
        history_included: prompt.history_included,
    })
}
