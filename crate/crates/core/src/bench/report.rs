//! Report files: summary and per-trial CSV, the JSON tree, SVG plots.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::experiment::{ExperimentReport, Trace};
use super::metrics::TrialMetrics;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Json,
    Svg,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            "svg" => Ok(Self::Svg),
            other => Err(Error::validation("formats", format!("unknown report format `{other}`"))),
        }
    }
}

pub const SUMMARY_COLUMNS: [&str; 7] = ["controller", "scenario", "zone", "metric", "mean", "std", "n"];
pub const TRIAL_COLUMNS: [&str; 6] = ["controller", "scenario", "zone", "seed", "metric", "value"];

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// One row per (cell, metric).
pub fn summary_csv(report: &ExperimentReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Config(format!("csv: {e}"));
    w.write_record(SUMMARY_COLUMNS).map_err(err)?;
    for c in &report.cells {
        for (metric, s) in &c.stats {
            w.write_record([
                c.controller.name(),
                &c.scenario,
                c.zone.name(),
                metric,
                &s.mean.to_string(),
                &s.std.to_string(),
                &c.n.to_string(),
            ])
            .map_err(err)?;
        }
    }
    w.into_inner().map_err(|e| Error::Config(format!("csv: {e}")))
}

/// One row per (trial, metric); failed trials are skipped.
pub fn trials_csv(report: &ExperimentReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Config(format!("csv: {e}"));
    w.write_record(TRIAL_COLUMNS).map_err(err)?;
    for t in &report.trials {
        let Some(m) = &t.metrics else { continue };
        for (name, v) in TrialMetrics::NAMES.iter().zip(m.values()) {
            w.write_record([
                t.controller.name(),
                &t.scenario,
                t.zone.name(),
                &t.seed.to_string(),
                name,
                &v.to_string(),
            ])
            .map_err(err)?;
        }
    }
    w.into_inner().map_err(|e| Error::Config(format!("csv: {e}")))
}

const COLORS: [&str; 4] = ["#444444", "#d95f02", "#1b9e77", "#7570b3"];

fn polyline(points: &[(f64, f64)], x: impl Fn(f64) -> f64, y: impl Fn(f64) -> f64, color: &str) -> String {
    let mut s = String::new();
    for &(a, b) in points {
        let _ = write!(s, "{:.2},{:.2} ", x(a), y(b));
    }
    format!("<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n", s.trim_end())
}

/// Two stacked panels, stem location and residual versus time, one line
/// per controller.
pub fn trace_svg(traces: &[&Trace]) -> String {
    let (w, h, pad) = (640.0, 200.0, 40.0);
    let t_max = traces
        .iter()
        .flat_map(|t| t.t.last().copied())
        .fold(0.0_f64, f64::max)
        .max(1e-9);
    let a_max = traces
        .iter()
        .flat_map(|t| t.a_res.iter().map(|a| a.abs()))
        .fold(0.0_f64, f64::max)
        .max(1e-3);
    let x = move |t: f64| pad + (w - 2.0 * pad) * t / t_max;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{}\" font-family=\"sans-serif\" font-size=\"11\">",
        2.0 * h + 30.0
    );
    if let Some(first) = traces.first() {
        let _ = writeln!(out, "<text x=\"{pad}\" y=\"16\">{} / {}</text>", first.scenario, first.zone.name());
    }
    for (panel, label) in [(0.0, "stem location u"), (1.0, "residual a_res (rad/s)")] {
        let top = 24.0 + panel * h;
        let _ = writeln!(
            out,
            "<rect x=\"{pad}\" y=\"{top}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#bbbbbb\"/>",
            w - 2.0 * pad,
            h - pad
        );
        let _ = writeln!(out, "<text x=\"{}\" y=\"{}\">{label}</text>", pad + 4.0, top + 12.0);
    }
    for (i, tr) in traces.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        // location panel: one polyline per contact stretch
        let y_u = |u: f64| 24.0 + (h - pad) * (1.0 - u);
        let mut run = Vec::new();
        for (t, u) in tr.t.iter().zip(&tr.u_true) {
            match u {
                Some(u) => run.push((*t, *u)),
                None if !run.is_empty() => {
                    out.push_str(&polyline(&run, x, y_u, color));
                    run.clear();
                }
                None => {}
            }
        }
        if !run.is_empty() {
            out.push_str(&polyline(&run, x, y_u, color));
        }
        let y_a = |a: f64| 24.0 + h + (h - pad) * (0.5 - 0.5 * a / a_max);
        let pts: Vec<(f64, f64)> = tr.t.iter().copied().zip(tr.a_res.iter().copied()).collect();
        out.push_str(&polyline(&pts, x, y_a, color));
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{}</text>",
            w - pad - 70.0,
            40.0 + 14.0 * i as f64,
            tr.controller.name()
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Write the requested formats under `dir`; returns the files written.
pub fn emit_report(report: &ExperimentReport, formats: &BTreeSet<ReportFormat>, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    if formats.is_empty() {
        return Ok(written);
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    if formats.contains(&ReportFormat::Csv) {
        for (name, bytes) in [("summary.csv", summary_csv(report)?), ("trials.csv", trials_csv(report)?)] {
            let p = dir.join(name);
            write_file(&p, &bytes)?;
            written.push(p);
        }
    }
    if formats.contains(&ReportFormat::Json) {
        let p = dir.join("report.json");
        let mut text = serde_json::to_string_pretty(report).map_err(|e| Error::Config(format!("json: {e}")))?;
        text.push('\n');
        write_file(&p, text.as_bytes())?;
        written.push(p);
    }
    if formats.contains(&ReportFormat::Svg) {
        let plots = dir.join("plots");
        fs::create_dir_all(&plots).map_err(|e| Error::io(&plots, e))?;
        let keys: BTreeSet<(String, &'static str)> =
            report.traces.iter().map(|t| (t.scenario.clone(), t.zone.name())).collect();
        for (scenario, zone) in keys {
            let group: Vec<&Trace> = report
                .traces
                .iter()
                .filter(|t| t.scenario == scenario && t.zone.name() == zone)
                .collect();
            let p = plots.join(format!("{scenario}_{zone}.svg"));
            write_file(&p, trace_svg(&group).as_bytes())?;
            written.push(p);
        }
    }
    Ok(written)
}
