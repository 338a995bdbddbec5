//! The control loop and the embedded-simulator runner.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::thread;

use thiserror::Error;

use super::report::{ReportError, Row, RunMeta, RunReport};
use super::utility::UtilityParams;
use crate::baseline::{reactive_decide, Thresholds};
use crate::client::{ProbeClient, ProbeError, DEFAULT_TIMEOUT};
use crate::config::{short_hash, SystemConfig};
use crate::context::ContextSnapshot;
use crate::decision::{Action, AdaptationDecision};
use crate::execute::{execute, verify, ExecuteError};
use crate::knowledge::{HistoryStore, Knowledge, KnowledgeError, PromptTemplate};
use crate::monitor::{observe, MonitorError};
use crate::par;
use crate::sim::{serve, SimEvent, SimServer, Simulator};
use crate::synthesize::{
    oracle_rule, synthesize, Engine, EngineError, EngineKind, Message, Prompt, Recorder,
    SynthesizeError,
};
use crate::trace::ArrivalTrace;

/// Verdict column value when no verifier ran.
pub const NO_VERDICT: &str = "-";
/// Verdict column value when the engine reply held no decision.
pub const NO_DECISION: &str = "NoDecision";

/// Why a loop stopped before its last period.
#[derive(Debug, Error)]
pub enum LoopError {
    #[error("advance: {0}")]
    Advance(String),
    #[error(transparent)]
    Monitor(#[from] MonitorError),
    #[error(transparent)]
    Synthesize(#[from] SynthesizeError),
    #[error(transparent)]
    Execute(#[from] ExecuteError),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Setup(String),
    #[error("harness io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Probe(#[from] ProbeError),
}

/// The managing policy driven by the loop.
pub enum Manager {
    /// Engine-backed synthesis, optionally gated by the verifier.
    Mse {
        engine: Box<dyn Engine + Send>,
        verify: bool,
        /// Re-synthesis attempts after a rejection.
        max_retries: u32,
    },
    Reactive(Thresholds),
}

impl Manager {
    pub fn mse(engine: Box<dyn Engine + Send>, verify: bool) -> Self {
        Manager::Mse {
            engine,
            verify,
            max_retries: 2,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Manager::Mse { engine, .. } => match engine.kind() {
                EngineKind::HttpChat => "http",
                EngineKind::MockOracle => "mock",
                EngineKind::Replay => "replay",
            },
            Manager::Reactive(_) => "reactive",
        }
    }

    fn verifies(&self) -> bool {
        matches!(self, Manager::Mse { verify: true, .. })
    }
}

/// The decision taken in one period and the verdict column for it.
#[derive(Debug, Clone, PartialEq)]
pub struct Decided {
    pub decision: AdaptationDecision,
    pub verdict: String,
}

fn decide_mse(
    c: &ContextSnapshot,
    knowledge: &Knowledge,
    engine: &mut dyn Engine,
    gate: bool,
    max_retries: u32,
) -> Result<Decided, LoopError> {
    let mut feedback: Vec<Message> = Vec::new();
    let mut first_verdict: Option<String> = None;
    for attempt in 0..=max_retries {
        let s = synthesize(c, knowledge, engine, &feedback)?;
        let ad = match s.decision {
            Ok(ad) => ad,
            Err(e) if attempt == 0 => {
                log::warn!(
                    "t={}: no decision in engine reply ({e}); doing nothing",
                    c.sim_time
                );
                return Ok(Decided {
                    decision: AdaptationDecision::new(Action::DoNothing, s.raw),
                    verdict: NO_DECISION.into(),
                });
            }
            Err(e) => {
                feedback.push(Message::assistant(s.raw));
                feedback.push(Message::user(format!(
                    "That reply could not be read ({e}). Answer with one decision line."
                )));
                continue;
            }
        };
        if !gate {
            return Ok(Decided {
                decision: ad,
                verdict: NO_VERDICT.into(),
            });
        }
        let v = verify(&ad, c, &knowledge.config);
        let label = first_verdict
            .get_or_insert_with(|| v.reason.to_string())
            .clone();
        if v.accepted {
            return Ok(Decided {
                decision: ad,
                verdict: label,
            });
        }
        log::info!(
            "t={}: verifier rejected `{}` ({})",
            c.sim_time,
            ad.encode(),
            v.reason
        );
        feedback.push(Message::assistant(s.raw));
        feedback.push(Message::user(v.feedback()));
    }
    // retries spent: the rule table, or the verifier's own pick if that fails too
    let rule = AdaptationDecision::canonical(oracle_rule(c, knowledge.config.rt_threshold));
    let v = verify(&rule, c, &knowledge.config);
    let decision = if v.accepted {
        rule
    } else {
        let alt = v
            .alternative
            .expect("a rejected valid action always has an alternative");
        AdaptationDecision::canonical(alt)
    };
    Ok(Decided {
        decision,
        verdict: first_verdict.unwrap_or_else(|| NO_DECISION.into()),
    })
}

/// One decision for context `c`.
pub fn decide(
    manager: &mut Manager,
    c: &ContextSnapshot,
    knowledge: &Knowledge,
) -> Result<Decided, LoopError> {
    match manager {
        Manager::Reactive(t) => Ok(Decided {
            decision: reactive_decide(c, t),
            verdict: NO_VERDICT.into(),
        }),
        Manager::Mse {
            engine,
            verify,
            max_retries,
        } => decide_mse(c, knowledge, engine.as_mut(), *verify, *max_retries),
    }
}

fn run_period(
    client: &mut ProbeClient,
    manager: &mut Manager,
    knowledge: &mut Knowledge,
    utility: &UtilityParams,
) -> Result<Row, LoopError> {
    let tau = knowledge.config.control_period;
    let reply = client
        .command(&format!("advance {tau}"))
        .map_err(|e| LoopError::Advance(e.to_string()))?;
    if reply != "OK" {
        return Err(LoopError::Advance(reply));
    }
    let c = observe(client, knowledge)?;
    let d = decide(manager, &c, knowledge)?;
    if manager.verifies() && d.verdict != NO_DECISION {
        debug_assert!(verify(&d.decision, &c, &knowledge.config).accepted);
    }
    match execute(&d.decision, client) {
        Ok(_) => {}
        Err(ExecuteError::EffectorRejected { command, reply }) => {
            log::warn!("t={}: `{command}` refused: {reply}", c.sim_time);
        }
        Err(e) => return Err(e.into()),
    }
    let row = Row::new(&c, &d.decision.action, d.verdict, tau, utility);
    knowledge.record(c, d.decision)?;
    Ok(row)
}

/// Runs `periods` iterations against the system behind `client`. Errors stop
/// the loop; the report then holds the completed periods and the reason.
pub fn run_mse_loop(
    client: &mut ProbeClient,
    manager: &mut Manager,
    knowledge: &mut Knowledge,
    periods: usize,
    utility: &UtilityParams,
    meta: RunMeta,
) -> RunReport {
    let mut rows = Vec::with_capacity(periods);
    let mut aborted = None;
    for i in 0..periods {
        match run_period(client, manager, knowledge, utility) {
            Ok(row) => rows.push(row),
            Err(e) => {
                log::error!("period {}: {e}; stopping", i + 1);
                aborted = Some(e.to_string());
                break;
            }
        }
    }
    RunReport::new(meta, rows, knowledge.config.rt_threshold, aborted)
}

/// Everything a run needs besides the manager.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub config: SystemConfig,
    pub trace: ArrivalTrace,
    pub seed: u64,
    /// Defaults to `floor(trace duration / control period)`.
    pub periods: Option<usize>,
    pub utility: UtilityParams,
    pub template: PromptTemplate,
}

impl RunSpec {
    pub fn new(config: SystemConfig, trace: ArrivalTrace, seed: u64) -> Self {
        let template =
            PromptTemplate::bundled(&crate::context::Objective::new(config.rt_threshold));
        Self {
            config,
            trace,
            seed,
            periods: None,
            utility: UtilityParams::default(),
            template,
        }
    }

    pub fn period_count(&self) -> Result<usize, HarnessError> {
        if let Some(n) = self.periods {
            return Ok(n);
        }
        let d = self.trace.duration().ok_or_else(|| {
            HarnessError::Setup("trace has no end marker; give the period count".into())
        })?;
        Ok((d / self.config.control_period).floor() as usize)
    }

    pub fn meta(&self, manager: &Manager) -> RunMeta {
        RunMeta {
            seed: self.seed,
            trace_id: self.trace.id(),
            engine: manager.label().into(),
            config_hash: short_hash(&self.config.to_kv()),
            verify: manager.verifies(),
        }
    }
}

pub struct RunOutput {
    pub report: RunReport,
    pub knowledge: Knowledge,
    /// Engine outputs in transcript form; empty for the reactive manager.
    pub transcript: String,
}

fn write_events(path: &Path, events: &[SimEvent]) -> Result<(), HarnessError> {
    let mut w = BufWriter::new(File::create(path)?);
    for e in events {
        serde_json::to_writer(&mut w, e).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Runs `manager` against an in-process simulator reached over loopback TCP.
/// With `out`, writes the report files, `history.jsonl`, `events.jsonl` and
/// (for engine-backed managers) `transcript.txt` there.
pub fn run_embedded(
    spec: &RunSpec,
    manager: Manager,
    out: Option<&Path>,
) -> Result<RunOutput, HarnessError> {
    spec.config
        .validate()
        .map_err(|e| HarnessError::Setup(e.to_string()))?;
    spec.utility
        .validate()
        .map_err(|e| HarnessError::Setup(e.to_string()))?;
    let periods = spec.period_count()?;
    let meta = spec.meta(&manager);
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
    }

    let mut knowledge = Knowledge::new(spec.config.clone(), spec.template.clone());
    if let Some(dir) = out {
        knowledge = knowledge.with_store(HistoryStore::create(dir.join("history.jsonl"))?);
    }

    let transcript_path: Option<PathBuf> = out.map(|d| d.join("transcript.txt"));
    let (mut manager, recorder_handle) = match manager {
        Manager::Mse {
            engine,
            verify,
            max_retries,
        } => {
            let rec = match &transcript_path {
                Some(p) => {
                    Recorder::to_file(engine, p).map_err(|e| HarnessError::Setup(e.to_string()))?
                }
                None => Recorder::new(engine),
            };
            let shared = SharedRecorder::new(rec);
            (
                Manager::Mse {
                    engine: Box::new(shared.clone()),
                    verify,
                    max_retries,
                },
                Some(shared),
            )
        }
        reactive => (reactive, None),
    };

    let sim = Simulator::from_config(&spec.config, spec.trace.clone(), spec.seed);
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    let server = thread::spawn(move || serve(&listener, SimServer::new(sim), Some(1)));

    let report = {
        let mut client = ProbeClient::connect(addr, DEFAULT_TIMEOUT)?;
        run_mse_loop(
            &mut client,
            &mut manager,
            &mut knowledge,
            periods,
            &spec.utility,
            meta,
        )
    };
    let mut sim = server
        .join()
        .map_err(|_| HarnessError::Setup("simulator thread panicked".into()))??
        .into_simulator();
    knowledge.ingest_events(sim.take_event_log());

    let transcript = recorder_handle.map(|r| r.transcript()).unwrap_or_default();
    if let Some(dir) = out {
        report.emit(dir)?;
        write_events(&dir.join("events.jsonl"), &knowledge.events)?;
    }
    Ok(RunOutput {
        report,
        knowledge,
        transcript,
    })
}

/// Runs the engine-backed manager and the reactive baseline on the same
/// trace and seed, concurrently when the `parallel` feature is on.
pub fn run_paired(
    spec: &RunSpec,
    mse: Manager,
    thresholds: Thresholds,
    out_mse: Option<&Path>,
    out_reactive: Option<&Path>,
) -> (
    Result<RunOutput, HarnessError>,
    Result<RunOutput, HarnessError>,
) {
    par::join(
        || run_embedded(spec, mse, out_mse),
        || run_embedded(spec, Manager::Reactive(thresholds), out_reactive),
    )
}

/// A recorder reachable both from the loop (as an engine) and from the
/// runner (to read the transcript afterwards).
#[derive(Clone)]
struct SharedRecorder(Arc<Mutex<Recorder<Box<dyn Engine + Send>>>>);

impl SharedRecorder {
    fn new(rec: Recorder<Box<dyn Engine + Send>>) -> Self {
        Self(Arc::new(Mutex::new(rec)))
    }

    fn transcript(&self) -> String {
        self.0.lock().expect("recorder lock").transcript()
    }
}

impl Engine for SharedRecorder {
    fn invoke(&mut self, prompt: &Prompt) -> Result<String, EngineError> {
        self.0.lock().expect("recorder lock").invoke(prompt)
    }

    fn kind(&self) -> EngineKind {
        self.0.lock().expect("recorder lock").kind()
    }
}
