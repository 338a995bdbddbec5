//! Independent constant-rate runs, batched for queueing checks.

use crate::config::ServiceParams;
use crate::par;
use crate::trace::ArrivalTrace;

use super::{SimParams, SimState, Simulator};

/// One constant-load run: `servers` always-on servers, fixed dimmer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Replication {
    pub arrival_rate: f64,
    pub servers: u32,
    pub service: ServiceParams,
    pub dimmer: f64,
    pub seed: u64,
    /// Stop once this many requests have completed.
    pub completions: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicationResult {
    pub completions: u64,
    pub elapsed: f64,
    pub mean_response_time: f64,
    pub mean_service_time: f64,
    /// Time-average number of requests in the system.
    pub mean_in_system: f64,
    /// Arrivals divided by elapsed time.
    pub measured_arrival_rate: f64,
    pub optional_fraction: f64,
}

impl ReplicationResult {
    /// Relative gap between L and lambda * W.
    pub fn littles_law_gap(&self) -> f64 {
        let rhs = self.measured_arrival_rate * self.mean_response_time;
        (self.mean_in_system - rhs).abs() / rhs
    }
}

impl Replication {
    pub fn run(&self) -> ReplicationResult {
        let params = SimParams {
            service: self.service,
            boot_delay: 1.0,
            max_servers: self.servers,
        };
        let state = SimState::new(self.servers, self.dimmer, self.seed);
        let mut sim = Simulator::new(params, ArrivalTrace::constant(self.arrival_rate), state);
        // chunk sized to overshoot the target by well under 1%
        let chunk = (self.completions as f64 / self.arrival_rate / 200.0).max(1.0);
        sim.run_until_completions(self.completions, chunk);
        let s = sim.state();
        let t = &s.totals;
        let completions = t.completions.max(1) as f64;
        ReplicationResult {
            completions: t.completions,
            elapsed: s.clock,
            mean_response_time: t.sum_response_time / completions,
            mean_service_time: t.sum_service_time
                / (t.completions + s.in_service() as u64).max(1) as f64,
            mean_in_system: t.area_in_system / s.clock,
            measured_arrival_rate: t.arrivals as f64 / s.clock,
            optional_fraction: t.optional_completions as f64 / completions,
        }
    }
}

/// Runs every replication, in parallel when the `parallel` feature is on.
pub fn replicate(jobs: &[Replication]) -> Vec<ReplicationResult> {
    par::map(jobs, Replication::run)
}

pub fn replicate_seq(jobs: &[Replication]) -> Vec<ReplicationResult> {
    par::map_seq(jobs, Replication::run)
}
