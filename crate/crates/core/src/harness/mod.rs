//! Experiment runner: wires the simulator and a manager into the loop,
//! scores runs, writes reports and compares them.

mod compare;
mod report;
mod run;
mod utility;

pub use compare::{compare, CompareError, Comparison, Side};
pub use report::{render_svg, ReportError, Row, RunMeta, RunReport, Totals, CSV_HEADER};
pub use run::{
    decide, run_embedded, run_mse_loop, run_paired, Decided, HarnessError, LoopError, Manager,
    RunOutput, RunSpec, NO_DECISION, NO_VERDICT,
};
pub use utility::{utility, utility_increment, PeriodSample, UtilityParams, UtilityParamsError};

use crate::baseline::Thresholds;
use crate::config::{parse_kv, parse_value, ConfigError, SystemConfig};

/// Everything a `key=value` config file can set.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HarnessConfig {
    pub system: SystemConfig,
    pub utility: UtilityParams,
    pub thresholds: Thresholds,
}

impl HarnessConfig {
    /// Parses a config file; unknown keys are an error.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let rest = cfg.system.apply(&parse_kv(text)?)?;
        for (k, v) in &rest {
            match k.as_str() {
                "revenue_optional" => cfg.utility.revenue_optional = parse_value(k, v)?,
                "revenue_mandatory" => cfg.utility.revenue_mandatory = parse_value(k, v)?,
                "server_cost" => cfg.utility.server_cost = parse_value(k, v)?,
                "utility_rt_threshold" => cfg.utility.rt_threshold = parse_value(k, v)?,
                "penalty_multiplier" => cfg.utility.penalty_multiplier = parse_value(k, v)?,
                "rt_hi" => cfg.thresholds.rt_hi = parse_value(k, v)?,
                "rt_lo" => cfg.thresholds.rt_lo = parse_value(k, v)?,
                "util_lo" => cfg.thresholds.util_lo = parse_value(k, v)?,
                _ => return Err(ConfigError::UnknownKey(k.clone())),
            }
        }
        cfg.utility
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_sections() {
        let cfg = HarnessConfig::parse(
            "max_servers=4\ninitial_servers=2\nserver_cost=0.2\nrt_lo=0.03\n# note\n",
        )
        .unwrap();
        assert_eq!(cfg.system.max_servers, 4);
        assert_eq!(cfg.utility.server_cost, 0.2);
        assert_eq!(cfg.thresholds.rt_lo, 0.03);
        assert!(matches!(
            HarnessConfig::parse("colour=blue"),
            Err(ConfigError::UnknownKey(k)) if k == "colour"
        ));
        assert!(HarnessConfig::parse("revenue_mandatory=2").is_err());
    }
}
