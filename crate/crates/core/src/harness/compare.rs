//! Side-by-side comparison of two run reports.

use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use super::report::RunReport;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompareError {
    #[error("reports use different traces: `{0}` vs `{1}`")]
    TraceMismatch(String, String),
    #[error("reports use different seeds: {0} vs {1}")]
    SeedMismatch(u64, u64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Side {
    pub engine: String,
    pub utility: f64,
    pub mean_rt: f64,
    pub max_rt: f64,
    pub rt_ok_fraction: f64,
    pub periods: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub a: Side,
    pub b: Side,
    /// Utility of `a` over utility of `b`.
    pub ratio: f64,
}

fn side(r: &RunReport) -> Side {
    Side {
        engine: r.meta.engine.clone(),
        utility: r.totals.utility,
        mean_rt: r.totals.mean_rt,
        max_rt: r.totals.max_rt,
        rt_ok_fraction: r.totals.rt_ok_fraction,
        periods: r.totals.periods,
    }
}

pub fn compare(a: &RunReport, b: &RunReport) -> Result<Comparison, CompareError> {
    if a.meta.trace_id != b.meta.trace_id {
        return Err(CompareError::TraceMismatch(
            a.meta.trace_id.clone(),
            b.meta.trace_id.clone(),
        ));
    }
    if a.meta.seed != b.meta.seed {
        return Err(CompareError::SeedMismatch(a.meta.seed, b.meta.seed));
    }
    Ok(Comparison {
        a: side(a),
        b: side(b),
        ratio: a.totals.utility / b.totals.utility,
    })
}

impl Comparison {
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<10} {:>14} {:>10} {:>10} {:>10} {:>8}",
            "run", "utility", "mean_rt", "max_rt", "rt<=bar", "periods"
        );
        for (name, x) in [("a", &self.a), ("b", &self.b)] {
            let _ = writeln!(
                s,
                "{:<10} {:>14.1} {:>10.4} {:>10.4} {:>9.1}% {:>8}",
                format!("{name}:{}", x.engine),
                x.utility,
                x.mean_rt,
                x.max_rt,
                100.0 * x.rt_ok_fraction,
                x.periods
            );
        }
        let _ = writeln!(s, "utility ratio a/b: {:.3}", self.ratio);
        s
    }
}
