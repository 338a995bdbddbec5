//! Knowledge base shared by every stage: conversation history, prompt
//! templates, system configuration, engine table, and captured logs.

mod template;

pub use template::{fill, PromptTemplate, TemplateError};

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::SystemConfig;
use crate::context::ContextSnapshot;
use crate::decision::AdaptationDecision;
use crate::sim::SimEvent;
use crate::synthesize::EngineConfig;

#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error("snapshot at t={got} does not follow last entry at t={last}")]
    OutOfOrderSnapshot { last: f64, got: f64 },
    #[error("corrupt history record at line {line}: {reason}")]
    CorruptRecord { line: usize, reason: String },
    #[error("history io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub context: ContextSnapshot,
    pub decision: AdaptationDecision,
}

/// Ordered (context, decision) pairs, one per control period.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConversationHistory {
    entries: Vec<HistoryEntry>,
}

impl ConversationHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[HistoryEntry] {
        &self.entries
    }

    pub fn last(&self) -> Option<&HistoryEntry> {
        self.entries.last()
    }

    pub fn append(
        &mut self,
        context: ContextSnapshot,
        decision: AdaptationDecision,
    ) -> Result<(), KnowledgeError> {
        if let Some(last) = self.entries.last() {
            if !(context.sim_time > last.context.sim_time) {
                return Err(KnowledgeError::OutOfOrderSnapshot {
                    last: last.context.sim_time,
                    got: context.sim_time,
                });
            }
        }
        self.entries.push(HistoryEntry { context, decision });
        Ok(())
    }

    /// The `k` most recent entries, oldest first.
    pub fn window(&self, k: usize) -> &[HistoryEntry] {
        &self.entries[self.entries.len().saturating_sub(k)..]
    }

    pub fn save(&self, path: &Path) -> Result<(), KnowledgeError> {
        let mut out = BufWriter::new(File::create(path)?);
        for e in &self.entries {
            serde_json::to_writer(&mut out, e).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    /// Loads a `history.jsonl` file; blank lines are ignored.
    pub fn load(path: &Path) -> Result<Self, KnowledgeError> {
        let mut history = Self::new();
        for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let corrupt = |reason: String| KnowledgeError::CorruptRecord {
                line: i + 1,
                reason,
            };
            let entry: HistoryEntry =
                serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
            history
                .append(entry.context, entry.decision)
                .map_err(|e| corrupt(e.to_string()))?;
        }
        Ok(history)
    }
}

/// `<root>/runs/<run_id>/history.jsonl`
pub fn history_path(root: &Path, run_id: &str) -> PathBuf {
    root.join("runs").join(run_id).join("history.jsonl")
}

/// Append-only writer; each entry is flushed before `append` returns.
pub struct HistoryStore {
    path: PathBuf,
    file: File,
}

impl HistoryStore {
    /// Creates (or truncates) the file, making parent directories as needed.
    pub fn create(path: impl Into<PathBuf>) -> Result<Self, KnowledgeError> {
        let path = path.into();
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(&path)?;
        Ok(Self { path, file })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, entry: &HistoryEntry) -> Result<(), KnowledgeError> {
        let mut line = serde_json::to_vec(entry).map_err(std::io::Error::from)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.flush()?;
        Ok(())
    }
}

/// Named engine configurations available to the synthesize stage.
#[derive(Debug, Clone, Default)]
pub struct EngineTable {
    engines: BTreeMap<String, EngineConfig>,
}

impl EngineTable {
    pub fn register(&mut self, name: impl Into<String>, cfg: EngineConfig) {
        self.engines.insert(name.into(), cfg);
    }

    pub fn get(&self, name: &str) -> Option<&EngineConfig> {
        self.engines.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.engines.keys().map(String::as_str)
    }
}

pub struct Knowledge {
    pub history: ConversationHistory,
    pub template: PromptTemplate,
    pub config: SystemConfig,
    pub engines: EngineTable,
    /// Every snapshot the monitor produced, in order.
    pub contexts: Vec<ContextSnapshot>,
    /// Structured event log captured from the managed system.
    pub events: Vec<SimEvent>,
    store: Option<HistoryStore>,
}

impl Knowledge {
    pub fn new(config: SystemConfig, template: PromptTemplate) -> Self {
        Self {
            history: ConversationHistory::new(),
            template,
            config,
            engines: EngineTable::default(),
            contexts: Vec::new(),
            events: Vec::new(),
            store: None,
        }
    }

    /// Persist every recorded pair through `store`.
    pub fn with_store(mut self, store: HistoryStore) -> Self {
        self.store = Some(store);
        self
    }

    pub fn ingest_context(&mut self, c: ContextSnapshot) {
        self.contexts.push(c);
    }

    pub fn ingest_events(&mut self, events: impl IntoIterator<Item = SimEvent>) {
        self.events.extend(events);
    }

    /// Appends the pair to the history and, if a store is attached, to disk.
    pub fn record(
        &mut self,
        context: ContextSnapshot,
        decision: AdaptationDecision,
    ) -> Result<(), KnowledgeError> {
        self.history.append(context, decision)?;
        if let Some(store) = &mut self.store {
            store.append(self.history.last().expect("just appended"))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decision::Action;
    use proptest::prelude::*;

    fn snap(t: f64) -> ContextSnapshot {
        ContextSnapshot {
            dimmer: 0.8,
            active_servers: 2,
            max_servers: 3,
            utilization: 0.5,
            avg_response_time: 0.05,
            arrival_rate: 20.0,
            sim_time: t,
        }
    }

    fn history_of(n: usize) -> ConversationHistory {
        let mut h = ConversationHistory::new();
        for i in 0..n {
            h.append(
                snap(200.0 * (i + 1) as f64),
                AdaptationDecision::canonical(Action::DoNothing),
            )
            .unwrap();
        }
        h
    }

    #[test]
    fn append_base_case_and_ordering() {
        let mut h = ConversationHistory::new();
        h.append(
            snap(200.0),
            AdaptationDecision::canonical(Action::AddServer),
        )
        .unwrap();
        assert_eq!(h.len(), 1);

        let mut h = history_of(14);
        assert_eq!(h.last().unwrap().context.sim_time, 2800.0);
        h.append(
            snap(3000.0),
            AdaptationDecision::canonical(Action::SetDimmer(0.6)),
        )
        .unwrap();
        let err = h
            .append(
                snap(3000.0),
                AdaptationDecision::canonical(Action::DoNothing),
            )
            .unwrap_err();
        assert!(matches!(err, KnowledgeError::OutOfOrderSnapshot { .. }));
        assert_eq!(h.len(), 15);
    }

    #[test]
    fn window_returns_most_recent() {
        let h = history_of(10);
        let w = h.window(3);
        let times: Vec<f64> = w.iter().map(|e| e.context.sim_time).collect();
        assert_eq!(times, vec![1600.0, 1800.0, 2000.0]);
        assert_eq!(history_of(2).window(5).len(), 2);
        assert!(h.window(0).is_empty());
    }

    #[test]
    fn persist_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = history_path(dir.path(), "r1");
        let mut h = history_of(50);
        h.append(
            snap(20_000.0),
            AdaptationDecision::new(Action::SetDimmer(0.8), "Lower it.\n1 0.8 \"quoted\""),
        )
        .unwrap();
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        h.save(&path).unwrap();
        assert_eq!(ConversationHistory::load(&path).unwrap(), h);
    }

    #[test]
    fn truncated_final_line_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("history.jsonl");
        history_of(3).save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, &text[..text.len() - 20]).unwrap();
        match ConversationHistory::load(&path) {
            Err(KnowledgeError::CorruptRecord { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected corrupt record, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_empty_history() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("history.jsonl");
        std::fs::write(&path, "").unwrap();
        assert!(ConversationHistory::load(&path).unwrap().is_empty());
    }

    #[test]
    fn store_persists_each_record() {
        let dir = tempfile::tempdir().unwrap();
        let path = history_path(dir.path(), "run");
        let mut k = Knowledge::new(SystemConfig::default(), PromptTemplate::default())
            .with_store(HistoryStore::create(&path).unwrap());
        for i in 1..=4 {
            k.record(
                snap(i as f64 * 200.0),
                AdaptationDecision::canonical(Action::DoNothing),
            )
            .unwrap();
            assert_eq!(ConversationHistory::load(&path).unwrap().len(), i);
        }
        assert_eq!(ConversationHistory::load(&path).unwrap(), k.history);
    }

    proptest! {
        #[test]
        fn arbitrary_histories_round_trip(
            rows in proptest::collection::vec(
                (0.0f64..=1.0, 1u32..=3, 0.0f64..=1.0, 0.0f64..10.0, 0.0f64..200.0, 0.1f64..500.0,
                 0u8..4, 0u32..=100, "\\PC{0,40}"),
                0..20,
            )
        ) {
            let mut h = ConversationHistory::new();
            let mut t = 0.0;
            for (d, s, u, rt, ar, dt, a, arg, raw) in rows {
                t += dt;
                let action = match a {
                    0 => Action::SetDimmer(arg as f64 / 100.0),
                    1 => Action::AddServer,
                    2 => Action::RemoveServer,
                    _ => Action::DoNothing,
                };
                let c = ContextSnapshot {
                    dimmer: d, active_servers: s, max_servers: 3, utilization: u,
                    avg_response_time: rt, arrival_rate: ar, sim_time: t,
                };
                h.append(c, AdaptationDecision::new(action, raw)).unwrap();
            }
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("h.jsonl");
            h.save(&path).unwrap();
            prop_assert_eq!(ConversationHistory::load(&path).unwrap(), h);
        }
    }
}
