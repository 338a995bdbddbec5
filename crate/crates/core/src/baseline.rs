//! Threshold-driven reactive manager, used as the comparison point.

use serde::{Deserialize, Serialize};

use crate::context::ContextSnapshot;
use crate::decision::{Action, AdaptationDecision};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub rt_hi: f64,
    pub rt_lo: f64,
    pub util_lo: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            rt_hi: 0.1,
            rt_lo: 0.05,
            util_lo: 0.4,
        }
    }
}

pub fn reactive_action(c: &ContextSnapshot, t: &Thresholds) -> Action {
    let rt = c.avg_response_time;
    if rt > t.rt_hi {
        if c.active_servers < c.max_servers {
            Action::AddServer
        } else {
            Action::set_dimmer((c.dimmer - 0.1).max(0.0))
        }
    } else if rt < t.rt_lo {
        if c.dimmer < 1.0 {
            Action::set_dimmer((c.dimmer + 0.1).min(1.0))
        } else if c.utilization < t.util_lo && c.active_servers > 1 {
            Action::RemoveServer
        } else {
            Action::DoNothing
        }
    } else {
        Action::DoNothing
    }
}

pub fn reactive_decide(c: &ContextSnapshot, t: &Thresholds) -> AdaptationDecision {
    AdaptationDecision::canonical(reactive_action(c, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::execute::{structural_check, Reason};
    use proptest::prelude::*;

    fn snap(rt: f64, servers: u32, dimmer: f64, util: f64) -> ContextSnapshot {
        ContextSnapshot {
            dimmer,
            active_servers: servers,
            max_servers: 3,
            utilization: util,
            avg_response_time: rt,
            arrival_rate: 30.0,
            sim_time: 200.0,
        }
    }

    #[test]
    fn rule_rows() {
        let t = Thresholds::default();
        assert_eq!(
            reactive_action(&snap(0.4, 2, 0.8, 0.9), &t),
            Action::AddServer
        );
        assert_eq!(
            reactive_action(&snap(0.02, 2, 0.9, 0.5), &t),
            Action::SetDimmer(1.0)
        );
        assert_eq!(
            reactive_action(&snap(0.07, 2, 0.9, 0.5), &t),
            Action::DoNothing
        );
        assert_eq!(
            reactive_action(&snap(0.4, 3, 0.8, 0.9), &t),
            Action::SetDimmer(0.7)
        );
        assert_eq!(
            reactive_action(&snap(0.4, 3, 0.05, 0.9), &t),
            Action::SetDimmer(0.0)
        );
        assert_eq!(
            reactive_action(&snap(0.02, 3, 1.0, 0.3), &t),
            Action::RemoveServer
        );
        assert_eq!(
            reactive_action(&snap(0.02, 1, 1.0, 0.3), &t),
            Action::DoNothing
        );
        assert_eq!(
            reactive_action(&snap(0.02, 2, 1.0, 0.5), &t),
            Action::DoNothing
        );
        assert_eq!(
            reactive_action(&snap(0.1, 2, 0.5, 0.5), &t),
            Action::DoNothing
        );
        assert_eq!(
            reactive_action(&snap(0.05, 2, 0.5, 0.5), &t),
            Action::DoNothing
        );
        assert_eq!(reactive_decide(&snap(0.4, 2, 0.8, 0.9), &t).raw_text, "2");
    }

    proptest! {
        #[test]
        fn always_structurally_valid(
            rt in 0.0f64..3.0, s in 1u32..=3, d in 0u32..=100, u in 0.0f64..=1.0
        ) {
            let c = snap(rt, s, d as f64 / 100.0, u);
            let a = reactive_action(&c, &Thresholds::default());
            prop_assert_eq!(structural_check(&a, &c), Reason::Ok);
            prop_assert_eq!(a, reactive_action(&c.clone(), &Thresholds::default()));
        }
    }
}
