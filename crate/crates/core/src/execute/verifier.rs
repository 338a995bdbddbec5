//! Gate between synthesis and execution: structural checks, then a
//! queueing-model prediction of the response time each action leads to.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::erlang::erlang_c_response_time;
use crate::config::SystemConfig;
use crate::context::ContextSnapshot;
use crate::decision::{Action, AdaptationDecision};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Reason {
    Ok,
    LastServer,
    PoolFull,
    BadDimmer,
    PredictedRtViolation,
    /// The action leaves the queue unstable while another action would not.
    UnstableQueue,
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Reason::Ok => "Ok",
            Reason::LastServer => "LastServer",
            Reason::PoolFull => "PoolFull",
            Reason::BadDimmer => "BadDimmer",
            Reason::PredictedRtViolation => "PredictedRtViolation",
            Reason::UnstableQueue => "UnstableQueue",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub accepted: bool,
    pub reason: Reason,
    /// Model prediction for the proposed action; NaN when a structural check
    /// failed first.
    pub predicted_rt: f64,
    /// Best action meeting the threshold, when the proposal was rejected for
    /// its predicted response time.
    pub alternative: Option<Action>,
}

impl Verdict {
    fn structural(reason: Reason) -> Self {
        Self {
            accepted: false,
            reason,
            predicted_rt: f64::NAN,
            alternative: None,
        }
    }

    /// Text shown to the engine after a rejection.
    pub fn feedback(&self) -> String {
        let mut s = format!("The verifier rejected that decision: {}.", self.reason);
        if self.predicted_rt.is_finite() {
            s.push_str(&format!(
                " Predicted response time {:.3} s.",
                self.predicted_rt
            ));
        } else if self.reason == Reason::UnstableQueue {
            s.push_str(" The queue would grow without bound.");
        }
        s.push_str(" Reply with a different decision.");
        s
    }
}

/// Structural validity of `action` in state `c`.
pub fn structural_check(action: &Action, c: &ContextSnapshot) -> Reason {
    match *action {
        Action::SetDimmer(v) if !(0.0..=1.0).contains(&v) => Reason::BadDimmer,
        Action::AddServer if c.active_servers >= c.max_servers => Reason::PoolFull,
        Action::RemoveServer if c.active_servers <= 1 => Reason::LastServer,
        _ => Reason::Ok,
    }
}

/// (servers, dimmer) once `action` has taken effect.
fn after(action: &Action, c: &ContextSnapshot) -> (u32, f64) {
    match *action {
        Action::SetDimmer(v) => (c.active_servers, v),
        Action::AddServer => (c.active_servers + 1, c.dimmer),
        Action::DoNothing => (c.active_servers, c.dimmer),
        Action::RemoveServer => (c.active_servers - 1, c.dimmer),
    }
}

/// Predicted mean response time after `action`; the action must be
/// structurally valid.
pub fn predict(action: &Action, c: &ContextSnapshot, cfg: &SystemConfig) -> f64 {
    let (servers, dimmer) = after(action, c);
    erlang_c_response_time(
        c.arrival_rate.max(0.0),
        servers.max(1),
        cfg.service.mean_at(dimmer),
    )
}

/// Every structurally valid action considered as an alternative: the three
/// fixed actions and set-dimmer on a 0.1 grid.
pub fn alternatives(c: &ContextSnapshot) -> Vec<Action> {
    let mut out = vec![Action::DoNothing, Action::AddServer, Action::RemoveServer];
    out.extend((0..=10).map(|k| Action::set_dimmer(k as f64 / 10.0)));
    out.retain(|a| structural_check(a, c) == Reason::Ok);
    out
}

/// The alternative used when a proposal is rejected, among those predicted
/// to meet `rt_threshold`. While the observed response time is over the
/// threshold (a backlog is draining) this is the one with the lowest
/// prediction; otherwise the one keeping the highest dimmer, then the fewest
/// servers. Earlier candidates win ties.
pub fn best_alternative(c: &ContextSnapshot, cfg: &SystemConfig) -> Option<Action> {
    let draining = c.avg_response_time > cfg.rt_threshold;
    let mut best: Option<(Action, u32, f64, f64)> = None;
    for a in alternatives(c) {
        let w = predict(&a, c, cfg);
        if w > cfg.rt_threshold {
            continue;
        }
        let (s, d) = after(&a, c);
        let better = match best {
            None => true,
            Some((_, _, _, bw)) if draining => w < bw,
            Some((_, bs, bd, _)) => d > bd || (d == bd && s < bs),
        };
        if better {
            best = Some((a, s, d, w));
        }
    }
    best.map(|(a, ..)| a)
}

pub fn verify(ad: &AdaptationDecision, c: &ContextSnapshot, cfg: &SystemConfig) -> Verdict {
    let reason = structural_check(&ad.action, c);
    if reason != Reason::Ok {
        return Verdict::structural(reason);
    }
    let predicted_rt = predict(&ad.action, c, cfg);
    if predicted_rt > cfg.rt_threshold {
        if let Some(alt) = best_alternative(c, cfg) {
            let reason = if predicted_rt.is_infinite() {
                Reason::UnstableQueue
            } else {
                Reason::PredictedRtViolation
            };
            return Verdict {
                accepted: false,
                reason,
                predicted_rt,
                alternative: Some(alt),
            };
        }
    }
    Verdict {
        accepted: true,
        reason: Reason::Ok,
        predicted_rt,
        alternative: None,
    }
}

/// Outcome of [`soundness_sweep`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepReport {
    pub cases: usize,
    pub accepted: usize,
    pub invalid_acceptances: usize,
    /// States where every candidate was rejected.
    pub all_rejected_states: usize,
    pub monotonicity_violations: usize,
}

/// Candidate actions checked per state in the sweep, including one
/// out-of-range dimmer.
pub const SWEEP_CANDIDATES: [Action; 7] = [
    Action::AddServer,
    Action::RemoveServer,
    Action::DoNothing,
    Action::SetDimmer(0.0),
    Action::SetDimmer(0.5),
    Action::SetDimmer(1.0),
    Action::SetDimmer(1.1),
];

/// Grid states: servers 1..=3, dimmer 0..=1 in 0.1 steps, rate 5..=60 in 5s.
pub fn sweep_states() -> Vec<ContextSnapshot> {
    let mut states = Vec::new();
    for servers in 1..=3u32 {
        for d in 0..=10 {
            for l in 1..=12 {
                states.push(ContextSnapshot {
                    dimmer: d as f64 / 10.0,
                    active_servers: servers,
                    max_servers: 3,
                    utilization: 0.5,
                    avg_response_time: 0.0,
                    arrival_rate: 5.0 * l as f64,
                    sim_time: 0.0,
                });
            }
        }
    }
    states
}

fn check_state(c: &ContextSnapshot, cfg: &SystemConfig) -> SweepReport {
    let mut r = SweepReport::default();
    let mut any_accepted = false;
    for a in &SWEEP_CANDIDATES {
        let v = verify(&AdaptationDecision::canonical(*a), c, cfg);
        r.cases += 1;
        if v.accepted {
            r.accepted += 1;
            any_accepted = true;
            if structural_check(a, c) != Reason::Ok {
                r.invalid_acceptances += 1;
            }
        }
    }
    if !any_accepted {
        r.all_rejected_states += 1;
    }
    let s = cfg.service.mean_at(c.dimmer);
    let w = erlang_c_response_time(c.arrival_rate, c.active_servers, s);
    let ok = erlang_c_response_time(c.arrival_rate, c.active_servers + 1, s) <= w
        && erlang_c_response_time(c.arrival_rate + 5.0, c.active_servers, s) >= w
        && erlang_c_response_time(c.arrival_rate, c.active_servers, s + 0.003) >= w;
    if !ok {
        r.monotonicity_violations += 1;
    }
    r
}

fn merge(parts: Vec<SweepReport>) -> SweepReport {
    parts
        .into_iter()
        .fold(SweepReport::default(), |mut acc, p| {
            acc.cases += p.cases;
            acc.accepted += p.accepted;
            acc.invalid_acceptances += p.invalid_acceptances;
            acc.all_rejected_states += p.all_rejected_states;
            acc.monotonicity_violations += p.monotonicity_violations;
            acc
        })
}

/// Exhaustive verifier check over the grid; runs on the thread pool when the
/// `parallel` feature is on.
pub fn soundness_sweep(cfg: &SystemConfig) -> SweepReport {
    merge(par::map(&sweep_states(), |c| check_state(c, cfg)))
}

pub fn soundness_sweep_seq(cfg: &SystemConfig) -> SweepReport {
    merge(par::map_seq(&sweep_states(), |c| check_state(c, cfg)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn loaded_state() -> ContextSnapshot {
        ContextSnapshot {
            dimmer: 0.8,
            active_servers: 2,
            max_servers: 3,
            utilization: 0.89261,
            avg_response_time: 0.35951825050096935,
            arrival_rate: 42.9667,
            sim_time: 3000.0,
        }
    }

    fn state(servers: u32, dimmer: f64, lambda: f64) -> ContextSnapshot {
        ContextSnapshot {
            dimmer,
            active_servers: servers,
            max_servers: 3,
            utilization: 0.5,
            avg_response_time: 0.0,
            arrival_rate: lambda,
            sim_time: 0.0,
        }
    }

    fn check(a: Action, c: &ContextSnapshot) -> Verdict {
        verify(
            &AdaptationDecision::canonical(a),
            c,
            &SystemConfig::default(),
        )
    }

    #[test]
    fn structural_rejections() {
        assert_eq!(
            check(Action::RemoveServer, &state(1, 0.5, 10.0)).reason,
            Reason::LastServer
        );
        assert_eq!(
            check(Action::AddServer, &state(3, 0.5, 10.0)).reason,
            Reason::PoolFull
        );
        let v = check(Action::SetDimmer(1.1), &state(2, 0.5, 10.0));
        assert_eq!(v.reason, Reason::BadDimmer);
        assert!(!v.accepted && v.predicted_rt.is_nan());
        assert_eq!(
            check(Action::SetDimmer(f64::NAN), &state(2, 0.5, 10.0)).reason,
            Reason::BadDimmer
        );
    }

    #[test]
    fn add_server_on_reference_state_is_accepted() {
        let v = check(Action::AddServer, &loaded_state());
        assert!(v.accepted);
        assert_eq!(v.reason, Reason::Ok);
        // 3 servers, mean service 0.044 s
        assert!(
            (v.predicted_rt - 0.059637846691871096).abs() < 1e-12,
            "{}",
            v.predicted_rt
        );
        assert_eq!(
            check(Action::DoNothing, &loaded_state()).reason,
            Reason::PredictedRtViolation
        );
    }

    #[test]
    fn unstable_when_a_dimmer_change_would_fix_it() {
        // 1 server at dimmer 1: capacity 20/s < 30/s; dimmer 0 gives 50/s
        let c = state(1, 1.0, 30.0);
        let v = check(Action::DoNothing, &c);
        assert!(!v.accepted);
        assert_eq!(v.reason, Reason::UnstableQueue);
        assert!(v.predicted_rt.is_infinite());
        // W(30, 1, 0.02 + 0.03 d) <= 0.1 needs d <= 0.1; adding a server
        // at dimmer 1 gives 0.114 s
        assert_eq!(v.alternative, Some(Action::SetDimmer(0.1)));
        assert!(check(Action::SetDimmer(0.1), &c).accepted);
        assert_eq!(
            check(Action::SetDimmer(0.2), &c).reason,
            Reason::PredictedRtViolation
        );
        assert_eq!(
            check(Action::AddServer, &c).reason,
            Reason::PredictedRtViolation
        );
    }

    #[test]
    fn nothing_better_means_accept() {
        // 60/s exceeds one server's capacity at every dimmer
        let c = state(1, 1.0, 60.0);
        let v = check(Action::DoNothing, &c);
        assert!(v.accepted);
        assert!(v.predicted_rt.is_infinite());
    }

    #[test]
    fn best_alternative_prefers_dimmer_then_fewer_servers() {
        let cfg = SystemConfig::default();
        // light load: everything meets the bar, keep dimmer 1 and drop a server
        assert_eq!(
            best_alternative(&state(3, 1.0, 5.0), &cfg),
            Some(Action::RemoveServer)
        );
        assert_eq!(
            best_alternative(&state(2, 0.4, 5.0), &cfg),
            Some(Action::SetDimmer(1.0))
        );
    }

    #[test]
    fn best_alternative_drains_when_over_threshold() {
        let cfg = SystemConfig::default();
        let mut c = state(2, 1.0, 30.0);
        assert_eq!(best_alternative(&c, &cfg), Some(Action::AddServer));
        c.avg_response_time = 4.0;
        // a third server at dimmer 1 predicts 0.0579 s; dimmer 0 on two
        // servers predicts 0.0227 s
        assert_eq!(best_alternative(&c, &cfg), Some(Action::SetDimmer(0.0)));
    }

    #[test]
    fn sweep_is_sound() {
        let cfg = SystemConfig::default();
        let r = soundness_sweep(&cfg);
        assert_eq!(r.cases, 2772);
        assert_eq!(r.invalid_acceptances, 0);
        assert_eq!(r.all_rejected_states, 0);
        assert_eq!(r.monotonicity_violations, 0);
        assert_eq!(r, soundness_sweep_seq(&cfg));
    }
}
