//! Per-period utility: request revenue with a latency penalty, minus server cost.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityParams {
    /// Revenue per request served with optional content.
    pub revenue_optional: f64,
    /// Revenue per request served without it.
    pub revenue_mandatory: f64,
    /// Cost per server per second.
    pub server_cost: f64,
    /// Response time (s) above which revenue is penalized.
    pub rt_threshold: f64,
    pub penalty_multiplier: f64,
}

impl Default for UtilityParams {
    fn default() -> Self {
        Self {
            revenue_optional: 1.5,
            revenue_mandatory: 1.0,
            server_cost: 0.1,
            rt_threshold: 0.75,
            penalty_multiplier: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid utility parameters: {0}")]
pub struct UtilityParamsError(pub String);

impl UtilityParams {
    pub fn validate(&self) -> Result<(), UtilityParamsError> {
        if !(self.revenue_optional > self.revenue_mandatory && self.revenue_mandatory > 0.0) {
            return Err(UtilityParamsError(
                "need revenue_optional > revenue_mandatory > 0".into(),
            ));
        }
        if !(self.server_cost >= 0.0 && self.penalty_multiplier >= 0.0) {
            return Err(UtilityParamsError("costs must be non-negative".into()));
        }
        if !(self.rt_threshold > 0.0) {
            return Err(UtilityParamsError("rt_threshold must be positive".into()));
        }
        Ok(())
    }
}

/// What one control period contributes to utility.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodSample {
    /// Period length (s).
    pub tau: f64,
    pub arrival_rate: f64,
    pub dimmer: f64,
    pub servers: u32,
    pub avg_rt: f64,
}

pub fn utility_increment(s: &PeriodSample, p: &UtilityParams) -> f64 {
    let served = s.tau * s.arrival_rate;
    let revenue = if s.avg_rt <= p.rt_threshold {
        served * (s.dimmer * p.revenue_optional + (1.0 - s.dimmer) * p.revenue_mandatory)
    } else {
        let keep = (1.0 - s.avg_rt / (2.0 * p.rt_threshold)).max(0.0);
        served * p.revenue_mandatory * p.penalty_multiplier * keep
    };
    revenue - s.tau * s.servers as f64 * p.server_cost
}

pub fn utility(samples: &[PeriodSample], p: &UtilityParams) -> f64 {
    samples.iter().map(|s| utility_increment(s, p)).sum()
}
