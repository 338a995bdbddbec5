use std::path::Path;

use thiserror::Error;

use super::HistoryEntry;
use crate::context::Objective;

const SYSTEM: &str = include_str!("../../data/prompts/system.txt");
const CONTEXT: &str = include_str!("../../data/prompts/context.txt");
const TERMINOLOGIES: &str = include_str!("../../data/prompts/terminologies.txt");
const FEW_SHOT: &str = include_str!("../../data/prompts/few_shot.jsonl");

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("template io: {0}")]
    Io(#[from] std::io::Error),
    #[error("few-shot line {line}: {reason}")]
    FewShot { line: usize, reason: String },
    #[error("objective text is empty")]
    EmptyObjective,
}

/// Prompt building blocks. `system_preamble` may use the placeholders
/// `{objective}`, `{terminologies}`, `{few_shot}` and `{history}`;
/// `context_template` may use `{context}` and `{actions}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub system_preamble: String,
    pub objective_text: String,
    pub terminologies: String,
    pub few_shot: Vec<HistoryEntry>,
    pub context_template: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::bundled(&Objective::new(0.1))
    }
}

fn parse_few_shot(text: &str) -> Result<Vec<HistoryEntry>, TemplateError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| TemplateError::FewShot {
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}

impl PromptTemplate {
    /// The templates shipped with the crate, with `objective` rendered in.
    pub fn bundled(objective: &Objective) -> Self {
        Self {
            system_preamble: SYSTEM.trim_end().to_string(),
            objective_text: objective.render(),
            terminologies: TERMINOLOGIES.trim_end().to_string(),
            few_shot: parse_few_shot(FEW_SHOT).expect("bundled few-shot file parses"),
            context_template: CONTEXT.trim_end().to_string(),
        }
    }

    /// Loads `system.txt`, `context.txt`, `terminologies.txt` and
    /// `few_shot.jsonl` from `dir`; missing files fall back to the bundled
    /// versions.
    pub fn load_dir(dir: &Path, objective: &Objective) -> Result<Self, TemplateError> {
        let mut t = Self::bundled(objective);
        let read = |name: &str| -> Result<Option<String>, TemplateError> {
            let p = dir.join(name);
            if p.exists() {
                Ok(Some(std::fs::read_to_string(p)?.trim_end().to_string()))
            } else {
                Ok(None)
            }
        };
        if let Some(s) = read("system.txt")? {
            t.system_preamble = s;
        }
        if let Some(s) = read("context.txt")? {
            t.context_template = s;
        }
        if let Some(s) = read("terminologies.txt")? {
            t.terminologies = s;
        }
        if let Some(s) = read("few_shot.jsonl")? {
            t.few_shot = parse_few_shot(&s)?;
        }
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), TemplateError> {
        if self.objective_text.trim().is_empty() {
            return Err(TemplateError::EmptyObjective);
        }
        Ok(())
    }

    /// True when history is inlined into the system message instead of
    /// being sent as separate user/assistant turns.
    pub fn inlines_history(&self) -> bool {
        self.system_preamble.contains("{history}")
    }
}

/// Replaces each `{name}` with its value; unknown placeholders stay as is.
pub fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (name, value) in values {
        out = out.replace(&format!("{{{name}}}"), value);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decision::Action;

    #[test]
    fn bundled_few_shot_covers_three_scenarios() {
        let t = PromptTemplate::default();
        let actions: Vec<Action> = t.few_shot.iter().map(|e| e.decision.action).collect();
        assert_eq!(
            actions,
            vec![
                Action::AddServer,
                Action::SetDimmer(0.5),
                Action::RemoveServer
            ]
        );
        // high RT below max, high RT at max, low RT and low utilization
        let f = &t.few_shot;
        assert!(f[0].context.avg_response_time > 0.1 && !f[0].context.at_capacity());
        assert!(f[1].context.avg_response_time > 0.1 && f[1].context.at_capacity());
        assert!(f[2].context.avg_response_time < 0.05 && f[2].context.utilization < 0.4);
        for e in f {
            let decoded = crate::decision::decode_decision(&e.decision.raw_text).unwrap();
            assert_eq!(decoded.action, e.decision.action);
        }
    }

    #[test]
    fn placeholders_are_present() {
        let t = PromptTemplate::default();
        for p in ["{objective}", "{terminologies}", "{few_shot}"] {
            assert!(t.system_preamble.contains(p), "{p}");
        }
        assert!(t.context_template.contains("{context}"));
        assert!(t.context_template.contains("{actions}"));
        assert!(!t.inlines_history());
    }

    #[test]
    fn fill_leaves_unknown_placeholders() {
        assert_eq!(fill("{a} and {b}", &[("a", "x")]), "x and {b}");
    }

    #[test]
    fn load_dir_overrides_and_validates() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("system.txt"),
            "Be brief. {objective}\n{history}",
        )
        .unwrap();
        let t = PromptTemplate::load_dir(dir.path(), &Objective::new(0.2)).unwrap();
        assert!(t.inlines_history());
        assert!(t.objective_text.contains("0.2 seconds"));
        std::fs::write(dir.path().join("few_shot.jsonl"), "{not json").unwrap();
        assert!(matches!(
            PromptTemplate::load_dir(dir.path(), &Objective::new(0.2)),
            Err(TemplateError::FewShot { line: 1, .. })
        ));
    }
}
