//! Prompt assembly under a token budget.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::{render_actions, ContextSnapshot};
use crate::knowledge::{fill, ConversationHistory, HistoryEntry, PromptTemplate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prompt {
    pub messages: Vec<Message>,
    pub token_estimate: usize,
    /// History entries included, counted from the most recent.
    pub history_included: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("prompt needs {needed} tokens without history, budget is {budget}")]
    BudgetTooSmall { needed: usize, budget: usize },
}

/// `ceil(chars / 4)`.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

pub fn estimate_messages(messages: &[Message]) -> usize {
    messages.iter().map(|m| estimate_tokens(&m.content)).sum()
}

fn one_line(c: &ContextSnapshot) -> String {
    c.render().replace('\n', ", ")
}

fn render_examples(entries: &[HistoryEntry]) -> String {
    entries
        .iter()
        .map(|e| {
            format!(
                "Status: {}\nDecision: {}",
                one_line(&e.context),
                e.decision.encode()
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn context_message(t: &PromptTemplate, c: &ContextSnapshot) -> String {
    fill(
        &t.context_template,
        &[("context", &c.render()), ("actions", &render_actions())],
    )
}

fn build(
    c: &ContextSnapshot,
    history: &[HistoryEntry],
    t: &PromptTemplate,
    feedback: &[Message],
) -> Vec<Message> {
    let inline = t.inlines_history();
    let history_text = if inline {
        render_examples(history)
    } else {
        String::new()
    };
    let system = fill(
        &t.system_preamble,
        &[
            ("objective", &t.objective_text),
            ("terminologies", &t.terminologies),
            ("few_shot", &render_examples(&t.few_shot)),
            ("history", &history_text),
        ],
    );
    let mut messages = vec![Message::system(system)];
    if !inline {
        for e in history {
            messages.push(Message::user(format!("Status:\n{}", e.context.render())));
            messages.push(Message::assistant(e.decision.encode()));
        }
    }
    messages.push(Message::user(context_message(t, c)));
    messages.extend(feedback.iter().cloned());
    messages
}

pub fn generate_prompt(
    c: &ContextSnapshot,
    h: &ConversationHistory,
    t: &PromptTemplate,
    budget: usize,
) -> Result<Prompt, PromptError> {
    generate_prompt_with_feedback(c, h, t, budget, &[])
}

/// Like [`generate_prompt`], with extra turns appended after the context
/// message (e.g. a verifier rejection). They count toward the budget.
///
/// Keeps the longest suffix of `h` that fits; older entries go first.
pub fn generate_prompt_with_feedback(
    c: &ContextSnapshot,
    h: &ConversationHistory,
    t: &PromptTemplate,
    budget: usize,
    feedback: &[Message],
) -> Result<Prompt, PromptError> {
    let cost = |k: usize| estimate_messages(&build(c, h.window(k), t, feedback));
    let needed = cost(0);
    if needed > budget {
        return Err(PromptError::BudgetTooSmall { needed, budget });
    }
    // cost is monotone in k: binary search for the largest k that fits
    let (mut lo, mut hi) = (0, h.len());
    while lo < hi {
        let mid = (lo + hi).div_ceil(2);
        if cost(mid) <= budget {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    let messages = build(c, h.window(lo), t, feedback);
    let token_estimate = estimate_messages(&messages);
    debug_assert!(token_estimate <= budget);
    Ok(Prompt {
        messages,
        token_estimate,
        history_included: lo,
    })
}
