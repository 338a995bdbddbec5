//! Discrete-event simulator of a brownout-capable web-server farm.
//!
//! Requests arrive as a Poisson process whose rate follows an
//! [`ArrivalTrace`]. With probability `dimmer` a request carries optional
//! content and its exponential service time has mean `s_M + s_O`, otherwise
//! mean `s_M`. A request goes to the first idle active server or waits in a
//! single FIFO queue. Servers boot with a fixed delay and drain before they
//! leave the pool.

mod protocol;
mod replicate;

pub use protocol::{serve, serve_connection, Command, SimServer};
pub use replicate::{replicate, replicate_seq, Replication, ReplicationResult};

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ServiceParams, SystemConfig};
use crate::decision::{quantize_dimmer, Action};
use crate::trace::ArrivalTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum EffectorError {
    #[error("pool full")]
    PoolFull,
    #[error("last server")]
    LastServer,
    #[error("dimmer out of range")]
    BadDimmer,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown metric `{0}`")]
pub struct UnknownMetric(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    Dimmer,
    ActiveServers,
    MaxServers,
    Utilization,
    BasicRt,
    ArrivalRate,
    Time,
}

impl std::str::FromStr for Metric {
    type Err = UnknownMetric;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "dimmer" => Metric::Dimmer,
            "active_servers" => Metric::ActiveServers,
            "max_servers" => Metric::MaxServers,
            "utilization" => Metric::Utilization,
            "basic_rt" => Metric::BasicRt,
            "arrival_rate" => Metric::ArrivalRate,
            "time" => Metric::Time,
            other => return Err(UnknownMetric(other.to_string())),
        })
    }
}

/// Parameters that stay fixed for a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimParams {
    pub service: ServiceParams,
    pub boot_delay: f64,
    pub max_servers: u32,
}

impl From<&SystemConfig> for SimParams {
    fn from(cfg: &SystemConfig) -> Self {
        Self {
            service: cfg.service,
            boot_delay: cfg.boot_delay,
            max_servers: cfg.max_servers,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ServerState {
    Active,
    Booting { ready_at: f64 },
    Draining,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    pub arrival: f64,
    pub optional: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Server {
    pub id: u64,
    pub state: ServerState,
    /// Completion time of the request in service, if any.
    pub busy_until: Option<f64>,
    pub in_service: Option<(Request, f64)>,
    /// Busy time accumulated since the window opened, excluding the
    /// request currently in service.
    pub window_busy: f64,
}

impl Server {
    fn new(id: u64, state: ServerState) -> Self {
        Self {
            id,
            state,
            busy_until: None,
            in_service: None,
            window_busy: 0.0,
        }
    }

    pub fn is_idle(&self) -> bool {
        self.in_service.is_none()
    }
}

/// Accumulators for the current monitoring window.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WindowStats {
    pub start: f64,
    pub completed: u64,
    pub sum_response_time: f64,
    pub arrivals: u64,
}

/// Whole-run accumulators, used by the queueing checks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunTotals {
    pub arrivals: u64,
    pub completions: u64,
    pub optional_completions: u64,
    pub sum_response_time: f64,
    pub sum_service_time: f64,
    /// Integral of the number of requests in the system over time.
    pub area_in_system: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub clock: f64,
    pub servers: Vec<Server>,
    pub queue: VecDeque<Request>,
    pub dimmer: f64,
    pub rng_seed: u64,
    pub window: WindowStats,
    pub totals: RunTotals,
    next_server_id: u64,
    next_request_id: u64,
}

impl SimState {
    pub fn new(initial_servers: u32, dimmer: f64, seed: u64) -> Self {
        let servers = (0..initial_servers as u64)
            .map(|id| Server::new(id, ServerState::Active))
            .collect();
        Self {
            clock: 0.0,
            servers,
            queue: VecDeque::new(),
            dimmer: quantize_dimmer(dimmer),
            rng_seed: seed,
            window: WindowStats::default(),
            totals: RunTotals::default(),
            next_server_id: initial_servers as u64,
            next_request_id: 0,
        }
    }

    pub fn count(&self, pred: impl Fn(&ServerState) -> bool) -> usize {
        self.servers.iter().filter(|s| pred(&s.state)).count()
    }

    pub fn active_count(&self) -> usize {
        self.count(|s| matches!(s, ServerState::Active))
    }

    pub fn booting_count(&self) -> usize {
        self.count(|s| matches!(s, ServerState::Booting { .. }))
    }

    pub fn in_service(&self) -> usize {
        self.servers.iter().filter(|s| !s.is_idle()).count()
    }

    pub fn in_system(&self) -> usize {
        self.queue.len() + self.in_service()
    }

    fn window_len(&self) -> f64 {
        self.clock - self.window.start
    }

    fn busy_in_window(&self, server: &Server) -> f64 {
        let running = server.in_service.map_or(0.0, |(_, started)| {
            self.clock - started.max(self.window.start)
        });
        server.window_busy + running
    }

    /// Mean busy fraction over active servers in the current window.
    pub fn utilization(&self) -> f64 {
        let len = self.window_len();
        let active: Vec<&Server> = self
            .servers
            .iter()
            .filter(|s| s.state == ServerState::Active)
            .collect();
        if len <= 0.0 || active.is_empty() {
            return 0.0;
        }
        let sum: f64 = active.iter().map(|s| self.busy_in_window(s) / len).sum();
        (sum / active.len() as f64).clamp(0.0, 1.0)
    }

    pub fn basic_rt(&self) -> f64 {
        if self.window.completed == 0 {
            0.0
        } else {
            self.window.sum_response_time / self.window.completed as f64
        }
    }

    pub fn arrival_rate(&self) -> f64 {
        let len = self.window_len();
        if len <= 0.0 {
            0.0
        } else {
            self.window.arrivals as f64 / len
        }
    }

    pub fn read_probe(&self, metric: Metric, max_servers: u32) -> f64 {
        match metric {
            Metric::Dimmer => self.dimmer,
            Metric::ActiveServers => (self.active_count() + self.booting_count()) as f64,
            Metric::MaxServers => max_servers as f64,
            Metric::Utilization => self.utilization(),
            Metric::BasicRt => self.basic_rt(),
            Metric::ArrivalRate => self.arrival_rate(),
            Metric::Time => self.clock,
        }
    }

    pub fn reset_window(&mut self) {
        let now = self.clock;
        for s in &mut self.servers {
            s.window_busy = 0.0;
        }
        self.window = WindowStats {
            start: now,
            ..WindowStats::default()
        };
    }
}

/// Structured simulator event, captured for the knowledge base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimEvent {
    Arrival {
        t: f64,
        request: u64,
        optional: bool,
    },
    Completion {
        t: f64,
        request: u64,
        server: u64,
        response_time: f64,
    },
    ServerAdded {
        t: f64,
        server: u64,
        ready_at: f64,
    },
    ServerReady {
        t: f64,
        server: u64,
    },
    ServerDraining {
        t: f64,
        server: u64,
    },
    ServerRetired {
        t: f64,
        server: u64,
    },
    BootCancelled {
        t: f64,
        server: u64,
    },
    DimmerSet {
        t: f64,
        value: f64,
    },
    WindowReset {
        t: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum EventKind {
    Arrival,
    Completion { server: u64 },
    BootDone { server: u64 },
}

#[derive(Debug, Clone, Copy)]
struct Scheduled {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scheduled {
    // reversed: BinaryHeap pops the earliest (time, seq) first
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.seq.cmp(&self.seq))
    }
}

/// Which events go into the log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LogLevel {
    /// Pool and dimmer changes only.
    #[default]
    Control,
    /// Every arrival and completion as well.
    Requests,
}

pub struct Simulator {
    params: SimParams,
    trace: ArrivalTrace,
    state: SimState,
    rng: ChaCha8Rng,
    events: BinaryHeap<Scheduled>,
    seq: u64,
    log: Vec<SimEvent>,
    log_level: LogLevel,
}

impl Simulator {
    pub fn new(params: SimParams, trace: ArrivalTrace, state: SimState) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(state.rng_seed);
        let mut sim = Self {
            params,
            trace,
            state,
            rng,
            events: BinaryHeap::new(),
            seq: 0,
            log: Vec::new(),
            log_level: LogLevel::Control,
        };
        for i in 0..sim.state.servers.len() {
            if let ServerState::Booting { ready_at } = sim.state.servers[i].state {
                let server = sim.state.servers[i].id;
                sim.schedule(ready_at, EventKind::BootDone { server });
            }
        }
        let now = sim.state.clock;
        sim.schedule_next_arrival(now);
        sim
    }

    /// Fresh simulator in the configured initial state.
    pub fn from_config(cfg: &SystemConfig, trace: ArrivalTrace, seed: u64) -> Self {
        let state = SimState::new(cfg.initial_servers, cfg.initial_dimmer, seed);
        Self::new(cfg.into(), trace, state)
    }

    pub fn with_log_level(mut self, level: LogLevel) -> Self {
        self.log_level = level;
        self
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn trace(&self) -> &ArrivalTrace {
        &self.trace
    }

    pub fn event_log(&self) -> &[SimEvent] {
        &self.log
    }

    pub fn take_event_log(&mut self) -> Vec<SimEvent> {
        std::mem::take(&mut self.log)
    }

    pub fn read_probe(&self, metric: Metric) -> f64 {
        self.state.read_probe(metric, self.params.max_servers)
    }

    pub fn reset_window(&mut self) {
        self.state.reset_window();
        let t = self.state.clock;
        self.log.push(SimEvent::WindowReset { t });
    }

    fn schedule(&mut self, time: f64, kind: EventKind) {
        self.seq += 1;
        self.events.push(Scheduled {
            time,
            seq: self.seq,
            kind,
        });
    }

    /// Draws the next Poisson arrival at or after `from`, walking across
    /// segment boundaries (the process is memoryless, so redrawing at a
    /// boundary is exact).
    fn schedule_next_arrival(&mut self, from: f64) {
        let mut t = from;
        loop {
            let idx = self.trace.segment_at(t);
            let rate = self.trace.segments()[idx].rate;
            let end = self.trace.segment_end(idx);
            if rate <= 0.0 {
                if end.is_infinite() {
                    return;
                }
                t = end;
                continue;
            }
            let gap = Exp::new(rate).expect("positive rate").sample(&mut self.rng);
            if t + gap < end {
                self.schedule(t + gap, EventKind::Arrival);
                return;
            }
            t = end;
        }
    }

    fn advance_clock(&mut self, to: f64) {
        let dt = to - self.state.clock;
        if dt > 0.0 {
            self.state.totals.area_in_system += dt * self.state.in_system() as f64;
            self.state.clock = to;
        }
    }

    /// Processes every event with timestamp `<= t_end`, then sets the clock
    /// to `t_end`.
    pub fn step_until(&mut self, t_end: f64) {
        assert!(t_end >= self.state.clock, "cannot step backwards");
        while let Some(ev) = self.events.peek().copied() {
            if ev.time > t_end {
                break;
            }
            self.events.pop();
            self.advance_clock(ev.time);
            match ev.kind {
                EventKind::Arrival => self.on_arrival(),
                EventKind::Completion { server } => self.on_completion(server),
                EventKind::BootDone { server } => self.on_boot_done(server),
            }
        }
        self.advance_clock(t_end);
    }

    pub fn advance(&mut self, seconds: f64) {
        let target = self.state.clock + seconds;
        self.step_until(target);
    }

    /// Steps in `chunk`-second increments until at least `n` requests have
    /// completed since the start of the run.
    pub fn run_until_completions(&mut self, n: u64, chunk: f64) {
        while self.state.totals.completions < n {
            if self.events.is_empty() {
                break;
            }
            self.advance(chunk);
        }
    }

    fn on_arrival(&mut self) {
        let now = self.state.clock;
        let optional = self.rng.random::<f64>() < self.state.dimmer;
        let id = self.state.next_request_id;
        self.state.next_request_id += 1;
        let request = Request {
            id,
            arrival: now,
            optional,
        };
        self.state.window.arrivals += 1;
        self.state.totals.arrivals += 1;
        if self.log_level == LogLevel::Requests {
            self.log.push(SimEvent::Arrival {
                t: now,
                request: id,
                optional,
            });
        }
        self.serve_request(request);
        self.schedule_next_arrival(now);
    }

    /// Hands the request to the first idle active server, else queues it.
    fn serve_request(&mut self, request: Request) {
        let idle = self
            .state
            .servers
            .iter()
            .position(|s| s.state == ServerState::Active && s.is_idle());
        match idle {
            Some(i) => self.start_service(i, request),
            None => self.state.queue.push_back(request),
        }
    }

    fn start_service(&mut self, idx: usize, request: Request) {
        let mean = if request.optional {
            self.params.service.mean_at(1.0)
        } else {
            self.params.service.mean_at(0.0)
        };
        let mut service = Exp::new(1.0 / mean)
            .expect("positive mean")
            .sample(&mut self.rng);
        if service <= 0.0 {
            service = f64::MIN_POSITIVE;
        }
        let now = self.state.clock;
        let done = now + service;
        let server = &mut self.state.servers[idx];
        debug_assert_eq!(server.state, ServerState::Active);
        server.in_service = Some((request, now));
        server.busy_until = Some(done);
        self.state.totals.sum_service_time += service;
        let id = server.id;
        self.schedule(done, EventKind::Completion { server: id });
    }

    fn server_index(&self, id: u64) -> Option<usize> {
        self.state.servers.iter().position(|s| s.id == id)
    }

    fn on_completion(&mut self, server_id: u64) {
        let now = self.state.clock;
        let Some(idx) = self.server_index(server_id) else {
            return;
        };
        let window_start = self.state.window.start;
        let server = &mut self.state.servers[idx];
        let Some((request, started)) = server.in_service.take() else {
            return;
        };
        server.busy_until = None;
        server.window_busy += now - started.max(window_start);
        let state = server.state;
        let rt = now - request.arrival;
        self.state.window.completed += 1;
        self.state.window.sum_response_time += rt;
        self.state.totals.completions += 1;
        self.state.totals.sum_response_time += rt;
        if request.optional {
            self.state.totals.optional_completions += 1;
        }
        if self.log_level == LogLevel::Requests {
            self.log.push(SimEvent::Completion {
                t: now,
                request: request.id,
                server: server_id,
                response_time: rt,
            });
        }
        match state {
            ServerState::Draining => {
                self.state.servers.remove(idx);
                self.log.push(SimEvent::ServerRetired {
                    t: now,
                    server: server_id,
                });
            }
            ServerState::Active => {
                if let Some(next) = self.state.queue.pop_front() {
                    self.start_service(idx, next);
                }
            }
            ServerState::Booting { .. } => unreachable!("booting server had work"),
        }
    }

    fn on_boot_done(&mut self, server_id: u64) {
        let now = self.state.clock;
        let Some(idx) = self.server_index(server_id) else {
            return; // boot was cancelled
        };
        if !matches!(self.state.servers[idx].state, ServerState::Booting { .. }) {
            return;
        }
        self.state.servers[idx].state = ServerState::Active;
        self.log.push(SimEvent::ServerReady {
            t: now,
            server: server_id,
        });
        if let Some(next) = self.state.queue.pop_front() {
            self.start_service(idx, next);
        }
    }

    pub fn set_dimmer(&mut self, value: f64) -> Result<(), EffectorError> {
        if !(0.0..=1.0).contains(&value) {
            return Err(EffectorError::BadDimmer);
        }
        self.state.dimmer = quantize_dimmer(value);
        let t = self.state.clock;
        self.log.push(SimEvent::DimmerSet {
            t,
            value: self.state.dimmer,
        });
        Ok(())
    }

    pub fn add_server(&mut self) -> Result<(), EffectorError> {
        let pool = self.state.active_count() + self.state.booting_count();
        if pool >= self.params.max_servers as usize {
            return Err(EffectorError::PoolFull);
        }
        let now = self.state.clock;
        let ready_at = now + self.params.boot_delay;
        let id = self.state.next_server_id;
        self.state.next_server_id += 1;
        self.state
            .servers
            .push(Server::new(id, ServerState::Booting { ready_at }));
        self.schedule(ready_at, EventKind::BootDone { server: id });
        self.log.push(SimEvent::ServerAdded {
            t: now,
            server: id,
            ready_at,
        });
        Ok(())
    }

    /// Cancels the newest booting server if there is one; otherwise drains an
    /// active server, preferring an idle one (which leaves at once).
    pub fn remove_server(&mut self) -> Result<(), EffectorError> {
        let now = self.state.clock;
        if let Some(idx) = self
            .state
            .servers
            .iter()
            .rposition(|s| matches!(s.state, ServerState::Booting { .. }))
        {
            let server = self.state.servers.remove(idx).id;
            self.log.push(SimEvent::BootCancelled { t: now, server });
            return Ok(());
        }
        if self.state.active_count() <= 1 {
            return Err(EffectorError::LastServer);
        }
        let active = |s: &Server| s.state == ServerState::Active;
        let idx = self
            .state
            .servers
            .iter()
            .rposition(|s| active(s) && s.is_idle())
            .or_else(|| self.state.servers.iter().rposition(active))
            .expect("at least two active servers");
        let server = self.state.servers[idx].id;
        if self.state.servers[idx].is_idle() {
            self.state.servers.remove(idx);
            self.log.push(SimEvent::ServerRetired { t: now, server });
        } else {
            self.state.servers[idx].state = ServerState::Draining;
            self.log.push(SimEvent::ServerDraining { t: now, server });
        }
        Ok(())
    }

    pub fn apply_effector(&mut self, action: &Action) -> Result<(), EffectorError> {
        match *action {
            Action::SetDimmer(v) => self.set_dimmer(v),
            Action::AddServer => self.add_server(),
            Action::RemoveServer => self.remove_server(),
            Action::DoNothing => Ok(()),
        }
    }

    /// Checks the structural invariants; used by tests after every step.
    pub fn check_invariants(&self) -> Result<(), String> {
        let s = &self.state;
        let pool = s.active_count() + s.booting_count();
        if pool > self.params.max_servers as usize {
            return Err(format!("pool {pool} exceeds max"));
        }
        if s.active_count() == 0 {
            return Err("no active server".into());
        }
        let accounted = s.totals.completions + s.in_system() as u64;
        if s.totals.arrivals != accounted {
            return Err(format!(
                "conservation: arrivals {} != completions {} + in system {}",
                s.totals.arrivals,
                s.totals.completions,
                s.in_system()
            ));
        }
        for server in &s.servers {
            if matches!(server.state, ServerState::Booting { .. }) && !server.is_idle() {
                return Err(format!("booting server {} has work", server.id));
            }
        }
        if !s.queue.is_empty()
            && s.servers
                .iter()
                .any(|srv| srv.state == ServerState::Active && srv.is_idle())
        {
            return Err("idle active server while requests wait".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
