//! Run reports and their on-disk forms: `report.csv`, `summary.json`,
//! `timeline.svg`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::utility::{utility_increment, PeriodSample, UtilityParams};
use crate::context::ContextSnapshot;
use crate::decision::Action;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("report io: {0}")]
    Io(#[from] std::io::Error),
    #[error("report csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("report json: {0}")]
    Json(#[from] serde_json::Error),
}

/// One control period. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub time_s: f64,
    pub dimmer: f64,
    pub active_servers: u32,
    pub max_servers: u32,
    pub utilization: f64,
    pub avg_rt_s: f64,
    pub arrival_rate_rps: f64,
    pub action: String,
    pub arg: Option<f64>,
    pub verdict: String,
    pub utility_inc: f64,
}

pub const CSV_HEADER: &str = "time_s,dimmer,active_servers,max_servers,utilization,avg_rt_s,arrival_rate_rps,action,arg,verdict,utility_inc";

impl Row {
    pub fn new(
        c: &ContextSnapshot,
        action: &Action,
        verdict: impl Into<String>,
        tau: f64,
        p: &UtilityParams,
    ) -> Self {
        let sample = PeriodSample {
            tau,
            arrival_rate: c.arrival_rate,
            dimmer: c.dimmer,
            servers: c.active_servers,
            avg_rt: c.avg_response_time,
        };
        Self {
            time_s: c.sim_time,
            dimmer: c.dimmer,
            active_servers: c.active_servers,
            max_servers: c.max_servers,
            utilization: c.utilization,
            avg_rt_s: c.avg_response_time,
            arrival_rate_rps: c.arrival_rate,
            action: action.name().to_string(),
            arg: action.argument(),
            verdict: verdict.into(),
            utility_inc: utility_increment(&sample, p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub seed: u64,
    pub trace_id: String,
    /// `mock`, `replay`, `http` or `reactive`.
    pub engine: String,
    pub config_hash: String,
    pub verify: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub periods: usize,
    pub utility: f64,
    pub mean_rt: f64,
    pub p95_rt: f64,
    pub max_rt: f64,
    /// Share of periods whose mean response time was at most `rt_bar`.
    pub rt_ok_fraction: f64,
    pub rt_bar: f64,
    pub decision_counts: BTreeMap<String, usize>,
}

impl Totals {
    pub fn of(rows: &[Row], rt_bar: f64) -> Self {
        let rts: Vec<f64> = rows.iter().map(|r| r.avg_rt_s).collect();
        let n = rows.len();
        let mut sorted = rts.clone();
        sorted.sort_by(f64::total_cmp);
        // nearest rank
        let p95 = if n == 0 {
            0.0
        } else {
            sorted[((0.95 * n as f64).ceil() as usize).clamp(1, n) - 1]
        };
        let mut decision_counts = BTreeMap::new();
        for r in rows {
            *decision_counts.entry(r.action.clone()).or_insert(0) += 1;
        }
        Self {
            periods: n,
            utility: rows.iter().map(|r| r.utility_inc).sum(),
            mean_rt: if n == 0 {
                0.0
            } else {
                rts.iter().sum::<f64>() / n as f64
            },
            p95_rt: p95,
            max_rt: sorted.last().copied().unwrap_or(0.0),
            rt_ok_fraction: if n == 0 {
                0.0
            } else {
                rts.iter().filter(|&&r| r <= rt_bar).count() as f64 / n as f64
            },
            rt_bar,
            decision_counts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub meta: RunMeta,
    pub rows: Vec<Row>,
    pub totals: Totals,
    /// Why the run stopped early, if it did.
    pub aborted: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct Summary {
    meta: RunMeta,
    totals: Totals,
    aborted: Option<String>,
}

impl RunReport {
    pub fn new(meta: RunMeta, rows: Vec<Row>, rt_bar: f64, aborted: Option<String>) -> Self {
        let totals = Totals::of(&rows, rt_bar);
        Self {
            meta,
            rows,
            totals,
            aborted,
        }
    }

    pub fn csv_string(&self) -> Result<String, ReportError> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)?;
        }
        let body = String::from_utf8(w.into_inner().map_err(|e| e.into_error())?)
            .expect("csv output is utf-8");
        Ok(format!("{CSV_HEADER}\n{body}"))
    }

    pub fn summary_json(&self) -> Result<String, ReportError> {
        let s = Summary {
            meta: self.meta.clone(),
            totals: self.totals.clone(),
            aborted: self.aborted.clone(),
        };
        Ok(serde_json::to_string_pretty(&s)? + "\n")
    }

    /// Writes `report.csv`, `summary.json` and, for non-empty reports,
    /// `timeline.svg` into `dir`.
    pub fn emit(&self, dir: &Path) -> Result<(), ReportError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.csv"), self.csv_string()?)?;
        fs::write(dir.join("summary.json"), self.summary_json()?)?;
        let svg = dir.join("timeline.svg");
        match render_svg(&self.rows) {
            Some(text) => fs::write(svg, text)?,
            None if svg.exists() => fs::remove_file(svg)?,
            None => {}
        }
        Ok(())
    }

    /// Reads a report written by [`RunReport::emit`].
    pub fn load(dir: &Path) -> Result<Self, ReportError> {
        let summary: Summary =
            serde_json::from_str(&fs::read_to_string(dir.join("summary.json"))?)?;
        let mut rdr = csv::Reader::from_path(dir.join("report.csv"))?;
        let rows = rdr.deserialize().collect::<Result<Vec<Row>, _>>()?;
        Ok(Self {
            meta: summary.meta,
            rows,
            totals: summary.totals,
            aborted: summary.aborted,
        })
    }
}

const W: f64 = 800.0;
const PANEL_H: f64 = 120.0;
const GAP: f64 = 30.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;

/// Four stacked panels over time: arrival rate, active servers, dimmer and
/// mean response time. `None` when there is nothing to plot.
pub fn render_svg(rows: &[Row]) -> Option<String> {
    if rows.is_empty() {
        return None;
    }
    let series: [(&str, &str, Vec<f64>); 4] = [
        (
            "arrival rate (req/s)",
            "#1f77b4",
            rows.iter().map(|r| r.arrival_rate_rps).collect(),
        ),
        (
            "active servers",
            "#2ca02c",
            rows.iter().map(|r| r.active_servers as f64).collect(),
        ),
        ("dimmer", "#ff7f0e", rows.iter().map(|r| r.dimmer).collect()),
        (
            "avg response time (s)",
            "#d62728",
            rows.iter().map(|r| r.avg_rt_s).collect(),
        ),
    ];
    let t0 = 0.0;
    let t1 = rows
        .iter()
        .map(|r| r.time_s)
        .fold(f64::MIN, f64::max)
        .max(1.0);
    let height = GAP + 4.0 * (PANEL_H + GAP);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, (label, color, ys)) in series.iter().enumerate() {
        let top = GAP + i as f64 * (PANEL_H + GAP);
        let ymax = match *label {
            "dimmer" => 1.0,
            "active servers" => rows
                .iter()
                .map(|r| r.max_servers as f64)
                .fold(1.0, f64::max),
            _ => ys.iter().copied().fold(0.0, f64::max).max(1e-9) * 1.1,
        };
        let x = |t: f64| LEFT + (t - t0) / (t1 - t0) * (W - LEFT - RIGHT);
        let y = |v: f64| top + PANEL_H - (v / ymax).clamp(0.0, 1.0) * PANEL_H;
        let _ = writeln!(
            s,
            r##"<rect x="{LEFT}" y="{top}" width="{}" height="{PANEL_H}" fill="none" stroke="#999"/>"##,
            W - LEFT - RIGHT
        );
        let _ = writeln!(s, r#"<text x="{LEFT}" y="{:.1}">{label}</text>"#, top - 6.0);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.3}</text>"#,
            LEFT - 4.0,
            top + 10.0,
            ymax
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">0</text>"#,
            LEFT - 4.0,
            top + PANEL_H
        );
        let points: Vec<String> = rows
            .iter()
            .zip(ys)
            .map(|(r, v)| format!("{:.1},{:.1}", x(r.time_s), y(*v)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">time (s), 0 to {t1}</text>"#,
        LEFT + (W - LEFT - RIGHT) / 2.0,
        height - 8.0
    );
    s.push_str("</svg>\n");
    Some(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> RunMeta {
        RunMeta {
            seed: 7,
            trace_id: "t:abc".into(),
            engine: "mock".into(),
            config_hash: "00".into(),
            verify: true,
        }
    }

    fn rows(n: usize) -> Vec<Row> {
        let p = UtilityParams::default();
        (0..n)
            .map(|i| {
                let c = ContextSnapshot {
                    dimmer: 0.9,
                    active_servers: 2,
                    max_servers: 3,
                    utilization: 0.5,
                    avg_response_time: (i + 1) as f64 / 100.0,
                    arrival_rate: 20.0,
                    sim_time: 200.0 * (i + 1) as f64,
                };
                let a = if i % 2 == 0 {
                    Action::SetDimmer(0.6)
                } else {
                    Action::DoNothing
                };
                Row::new(&c, &a, "Ok", 200.0, &p)
            })
            .collect()
    }

    #[test]
    fn csv_shape() {
        let r = RunReport::new(meta(), rows(31), 0.1, None);
        let text = r.csv_string().unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 32);
        assert_eq!(lines[0], CSV_HEADER);
        assert!(lines[1].starts_with("200.0,0.9,2,3,0.5,0.01,20.0,SetDimmer,0.6,Ok,"));
        assert!(lines[2].contains(",DoNothing,,Ok,"));
    }

    #[test]
    fn empty_report_has_header_and_no_svg() {
        let dir = tempfile::tempdir().unwrap();
        let r = RunReport::new(meta(), vec![], 0.1, Some("stopped".into()));
        r.emit(dir.path()).unwrap();
        assert_eq!(
            fs::read_to_string(dir.path().join("report.csv")).unwrap(),
            format!("{CSV_HEADER}\n")
        );
        assert!(!dir.path().join("timeline.svg").exists());
        assert_eq!(RunReport::load(dir.path()).unwrap(), r);
    }

    #[test]
    fn emit_and_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let r = RunReport::new(meta(), rows(5), 0.1, None);
        r.emit(dir.path()).unwrap();
        let svg = fs::read_to_string(dir.path().join("timeline.svg")).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 4);
        assert_eq!(RunReport::load(dir.path()).unwrap(), r);
    }

    #[test]
    fn totals() {
        let rs = rows(20);
        let t = Totals::of(&rs, 0.1);
        assert_eq!(t.periods, 20);
        assert_eq!(t.max_rt, 0.2);
        assert_eq!(t.p95_rt, 0.19);
        assert_eq!(t.rt_ok_fraction, 0.5);
        assert_eq!(t.decision_counts["SetDimmer"], 10);
        let sum: f64 = rs.iter().map(|r| r.utility_inc).sum();
        assert_eq!(t.utility, sum);
    }
}
