//! Rendering of run results to CSV, JSON and Markdown, plus the manifest.
//!
//! Everything is rendered into memory first and written in one final phase in
//! path order, so output bytes depend only on inputs and configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{codes, Finding, Format, RunConfig};
use crate::cross_section::{Correlation, RegressionCell, VARIABLES};
use crate::event_study::{CrossEventStat, PanelResult};
use crate::inference::TestResult;
use crate::ingest::Panel;
use crate::market_model::Channel;
use crate::pipeline::{analyze, compute, sha256_hex, Analysis, EventOutput, FailureKind, RunError};

pub const INTERMEDIATE: &str = "intermediate/events.json";
pub const MANIFEST: &str = "manifest.json";

/// One rendered output file, path relative to the output directory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Artifact {
    pub path: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    fn text(path: impl Into<String>, text: String) -> Self {
        Self {
            path: path.into(),
            bytes: text.into_bytes(),
        }
    }

    fn json<T: Serialize>(path: impl Into<String>, value: &T) -> Self {
        let mut bytes = serde_json::to_vec_pretty(value).expect("serializable");
        bytes.push(b'\n');
        Self {
            path: path.into(),
            bytes,
        }
    }
}

/// Cached per-event results; `report` re-renders from this file without
/// refitting any market model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intermediate {
    pub inputs: BTreeMap<String, String>,
    pub events: Vec<EventOutput>,
    pub findings: Vec<Finding>,
}

/// Fixed-point with `digits` decimals; `NA` for non-finite values.
pub fn fixed(x: f64, digits: usize) -> String {
    if !x.is_finite() {
        return "NA".into();
    }
    let s = format!("{x:.digits$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

/// Shortest round-trip representation; `NA` for non-finite values.
fn exact(x: f64) -> String {
    if x.is_finite() {
        x.to_string()
    } else {
        "NA".into()
    }
}

fn test_cell(t: &TestResult) -> String {
    if t.statistic.is_finite() {
        format!("{}{}", fixed(t.statistic, 2), t.stars.as_str())
    } else {
        "NA".into()
    }
}

fn panel_slug(panel: Panel) -> String {
    panel.tag().to_lowercase()
}

fn table_days(r: &PanelResult) -> impl Iterator<Item = (String, &CrossEventStat)> {
    r.days
        .iter()
        .filter(|d| (-7..=6).contains(&d.day))
        .map(|d| (format!("[{}]", d.day), &d.stat))
}

fn event_table_rows(r: &PanelResult) -> Vec<(&'static str, String, &CrossEventStat)> {
    let mut rows: Vec<(&'static str, String, &CrossEventStat)> =
        r.windows.iter().map(|w| ("window", w.spec.label.clone(), &w.stat)).collect();
    rows.extend(table_days(r).map(|(l, s)| ("day", l, s)));
    rows
}

fn event_table_csv(results: &[&PanelResult]) -> String {
    let mut out = String::from("panel,block,label,n,mean,t,z\n");
    for r in results {
        for (block, label, s) in event_table_rows(r) {
            let _ = writeln!(
                out,
                "{},{block},\"{label}\",{},{},{},{}",
                r.panel.tag(),
                s.values.len(),
                fixed(s.mean, 3),
                test_cell(&s.t),
                test_cell(&s.z)
            );
        }
    }
    out
}

fn stat_json(label: &str, s: &CrossEventStat) -> serde_json::Value {
    json!({
        "label": label,
        "n": s.values.len(),
        "mean": s.mean,
        "t": s.t,
        "z": s.z,
        "ci_low": s.ci_low,
        "ci_high": s.ci_high,
        "excluded": s.excluded,
        "values": s.values,
    })
}

fn event_table_json(results: &[&PanelResult]) -> serde_json::Value {
    let panels: Vec<_> = results
        .iter()
        .map(|r| {
            json!({
                "panel": r.panel,
                "channel": r.channel,
                "event_ids": r.event_ids,
                "windows": r.windows.iter().map(|w| stat_json(&w.spec.label, &w.stat)).collect::<Vec<_>>(),
                "days": r.days.iter().map(|d| stat_json(&d.day.to_string(), &d.stat)).collect::<Vec<_>>(),
            })
        })
        .collect();
    json!({ "panels": panels })
}

fn event_table_md(channel: Channel, results: &[&PanelResult]) -> String {
    let title = match channel {
        Channel::Returns => "Event study: abnormal log returns",
        Channel::Volumes => "Event study: abnormal log trading volumes",
    };
    let mut out = format!("# {title}\n");
    for r in results {
        let _ = write!(
            out,
            "\n## Panel ({}) {} (n = {})\n\n| Window | {} | t-test | z-test |\n|---|---:|---:|---:|\n",
            r.panel.letter(),
            r.panel.title(),
            r.event_ids.len(),
            channel.window_label()
        );
        for (_, label, s) in event_table_rows(r) {
            let _ = writeln!(out, "| {label} | {} | {} | {} |", fixed(s.mean, 3), test_cell(&s.t), test_cell(&s.z));
        }
    }
    out
}

const TERMS: [(&str, usize); 6] = [
    ("b1 Size", 1),
    ("b2 Age", 2),
    ("b3 Volatility", 3),
    ("b4 Illiquidity", 4),
    ("b5 Sentiment", 5),
    ("a1 Constant", 0),
];

fn grid_rows(cells: &[RegressionCell]) -> (Vec<String>, Vec<Vec<String>>) {
    let header: Vec<String> = ["term".to_string(), "stat".to_string()]
        .into_iter()
        .chain(cells.iter().map(|c| format!("({})", c.index)))
        .collect();
    let mut rows = Vec::new();
    for (name, k) in TERMS {
        let mut coef = vec![name.to_string(), "coef".into()];
        let mut se = vec![name.to_string(), "se".into()];
        for c in cells {
            match &c.fit {
                Some(f) => {
                    coef.push(format!("{}{}", fixed(f.coefficients[k], 3), f.stars[k].as_str()));
                    se.push(format!("({})", fixed(f.standard_errors[k], 3)));
                }
                None => {
                    coef.push("NA".into());
                    se.push("NA".into());
                }
            }
        }
        rows.push(coef);
        rows.push(se);
    }
    let mut adj = vec!["adj_rw2".to_string(), String::new()];
    let mut period = vec!["period".to_string(), String::new()];
    let mut dep = vec!["dependent".to_string(), String::new()];
    for c in cells {
        adj.push(c.fit.as_ref().map_or("NA".into(), |f| fixed(f.adj_rw2, 3)));
        period.push(c.period.to_string());
        dep.push(c.dependent.clone());
    }
    rows.extend([adj, period, dep]);
    (header, rows)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn csv_table(header: &[String], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    for r in std::iter::once(header).chain(rows.iter().map(|r| r.as_slice())) {
        let line: Vec<String> = r.iter().map(|s| csv_field(s)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

fn md_table(header: &[String], rows: &[Vec<String>]) -> String {
    let mut out = format!("| {} |\n|{}\n", header.join(" | "), "---|".repeat(header.len()));
    for r in rows {
        let _ = writeln!(out, "| {} |", r.join(" | "));
    }
    out
}

fn corr_cell(c: &Correlation) -> String {
    match c.r {
        Some(r) => format!("{}{}", fixed(r, 3), if c.significant { "*" } else { "" }),
        None => "NA".into(),
    }
}

fn correlation_rows(a: &Analysis) -> (Vec<String>, Vec<Vec<String>>) {
    let header: Vec<String> = ["block", "row"]
        .into_iter()
        .chain(VARIABLES)
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for (i, name) in VARIABLES.iter().enumerate() {
        let mut row = vec!["controls".to_string(), name.to_string()];
        for j in 0..VARIABLES.len() {
            let cell = a
                .correlations
                .controls
                .iter()
                .find(|c| c.row == *name && c.column == VARIABLES[j])
                .filter(|_| j <= i);
            row.push(cell.map_or(String::new(), corr_cell));
        }
        rows.push(row);
    }
    for (block, list) in [("CAR", &a.correlations.cars), ("CAV", &a.correlations.cavs)] {
        let mut labels: Vec<&str> = Vec::new();
        for c in list.iter() {
            if !labels.contains(&c.row.as_str()) {
                labels.push(&c.row);
            }
        }
        for label in labels {
            let mut row = vec![block.to_string(), label.to_string()];
            for v in VARIABLES {
                let cell = list.iter().find(|c| c.row == label && c.column == v);
                row.push(cell.map_or("NA".into(), corr_cell));
            }
            rows.push(row);
        }
    }
    (header, rows)
}

fn descriptive_rows(a: &Analysis) -> (Vec<String>, Vec<Vec<String>>) {
    let header: Vec<String> = ["variable", "n", "mean", "sd", "median", "min", "max"]
        .into_iter()
        .map(String::from)
        .collect();
    let rows = a
        .descriptives
        .iter()
        .map(|d| {
            vec![
                d.variable.clone(),
                d.n.to_string(),
                fixed(d.mean, 3),
                d.sd.map_or("NA".into(), |s| fixed(s, 3)),
                fixed(d.median, 3),
                fixed(d.min, 3),
                fixed(d.max, 3),
            ]
        })
        .collect();
    (header, rows)
}

fn diagnostics(a: &Analysis) -> serde_json::Value {
    let mut exclusions = Vec::new();
    let mut flags = Vec::new();
    for r in &a.panels {
        let labelled = r
            .windows
            .iter()
            .map(|w| (w.spec.label.clone(), &w.stat))
            .chain(r.days.iter().map(|d| (format!("[{}]", d.day), &d.stat)));
        for (label, s) in labelled {
            if !s.excluded.is_empty() {
                exclusions.push(json!({
                    "panel": r.panel, "channel": r.channel, "label": label, "excluded": s.excluded,
                }));
            }
            for (test, t) in [("t", &s.t), ("z", &s.z)] {
                if let Some(flag) = t.flag {
                    flags.push(json!({
                        "panel": r.panel, "channel": r.channel, "label": label, "test": test, "flag": flag,
                    }));
                }
            }
        }
    }
    let regressions: Vec<_> = a
        .table4
        .cells
        .iter()
        .map(|c| {
            json!({
                "index": c.index,
                "dependent": c.dependent,
                "period": c.period.to_string(),
                "n_obs": c.fit.as_ref().map(|f| f.n_obs),
                "converged": c.fit.as_ref().map(|f| f.converged),
                "iterations": c.fit.as_ref().map(|f| f.iterations),
                "exact_fit": c.fit.as_ref().map(|f| f.exact_fit),
                "error": c.error,
            })
        })
        .collect();
    json!({
        "findings": a.findings,
        "exclusions": exclusions,
        "test_flags": flags,
        "regressions": regressions,
    })
}

fn figure_csv(points: &[crate::event_study::FigurePoint]) -> String {
    let mut out = String::from("relative_day,cum_mean,ci_low,ci_high\n");
    for p in points {
        let _ = writeln!(out, "{},{},{},{}", p.relative_day, exact(p.cum_mean), exact(p.ci_low), exact(p.ci_high));
    }
    out
}

/// Renders every table, figure, diagnostic and the intermediate cache.
/// The manifest is added by [`with_manifest`].
pub fn render(a: &Analysis, cfg: &RunConfig, inputs: &BTreeMap<String, String>) -> Vec<Artifact> {
    let mut out = Vec::new();
    let wants = |f: Format| cfg.formats.contains(&f);
    let channel_results = |ch: Channel| -> Vec<&PanelResult> {
        a.panels
            .iter()
            .filter(|r| r.channel == ch && cfg.panels.contains(&r.panel))
            .collect()
    };
    for (stem, ch) in [("table2_returns", Channel::Returns), ("table3_volumes", Channel::Volumes)] {
        let results = channel_results(ch);
        if wants(Format::Csv) {
            out.push(Artifact::text(format!("{stem}.csv"), event_table_csv(&results)));
        }
        if wants(Format::Json) {
            out.push(Artifact::json(format!("{stem}.json"), &event_table_json(&results)));
        }
        if wants(Format::Markdown) {
            out.push(Artifact::text(format!("{stem}.md"), event_table_md(ch, &results)));
        }
    }

    let tables = [
        ("table4_determinants", grid_rows(&a.table4.cells), "Robust determinants of abnormal returns and volumes"),
        ("tableA1_descriptives", descriptive_rows(a), "Descriptive statistics"),
        ("tableA2_correlations", correlation_rows(a), "Correlations (* significant at 5%)"),
    ];
    for (stem, (header, rows), title) in tables {
        if wants(Format::Csv) {
            out.push(Artifact::text(format!("{stem}.csv"), csv_table(&header, &rows)));
        }
        if wants(Format::Markdown) {
            out.push(Artifact::text(format!("{stem}.md"), format!("# {title}\n\n{}", md_table(&header, &rows))));
        }
    }
    if wants(Format::Json) {
        out.push(Artifact::json("table4_determinants.json", &a.table4));
        out.push(Artifact::json("tableA1_descriptives.json", &a.descriptives));
        out.push(Artifact::json("tableA2_correlations.json", &a.correlations));
    }

    for f in &a.figures {
        out.push(Artifact::text(
            format!("figures/{}_{}_{}.csv", f.channel.name(), panel_slug(f.panel), f.kind),
            figure_csv(&f.points),
        ));
    }
    out.push(Artifact::json("diagnostics.json", &diagnostics(a)));
    out.push(Artifact::json(
        INTERMEDIATE,
        &Intermediate {
            inputs: inputs.clone(),
            events: a.events.clone(),
            findings: a.findings.clone(),
        },
    ));
    out.sort_by(|x, y| x.path.cmp(&y.path));
    out
}

/// Appends `manifest.json` listing every artifact with its SHA-256 digest.
pub fn with_manifest(mut artifacts: Vec<Artifact>, cfg: &RunConfig, inputs: &BTreeMap<String, String>) -> Vec<Artifact> {
    let outputs: Vec<_> = artifacts
        .iter()
        .map(|a| json!({ "path": a.path, "bytes": a.bytes.len(), "sha256": sha256_hex(&a.bytes) }))
        .collect();
    let manifest = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "seed": cfg.robust.seed,
        "inputs": inputs,
        "outputs": outputs,
    });
    artifacts.push(Artifact::json(MANIFEST, &manifest));
    artifacts
}

pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> Result<(), RunError> {
    let fail = |p: &Path, e: std::io::Error| {
        RunError::new(FailureKind::Data, codes::OUTPUT_NOT_WRITABLE, format!("{}: {e}", p.display()))
    };
    for a in artifacts {
        let path = dir.join(&a.path);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| fail(parent, e))?;
        }
        fs::write(&path, &a.bytes).map_err(|e| fail(&path, e))?;
    }
    Ok(())
}

/// Summary returned to the CLI.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub outputs: Vec<String>,
    pub warnings: usize,
    pub events: usize,
}

fn finish(a: &Analysis, cfg: &RunConfig, inputs: &BTreeMap<String, String>) -> Result<RunSummary, RunError> {
    let artifacts = with_manifest(render(a, cfg, inputs), cfg, inputs);
    write_artifacts(&cfg.output_dir, &artifacts)?;
    Ok(RunSummary {
        outputs: artifacts.iter().map(|a| a.path.clone()).collect(),
        warnings: a.findings.len(),
        events: a.events.len(),
    })
}

/// Full run: validate, load, analyze and write all artifacts.
pub fn run(cfg: &RunConfig) -> Result<RunSummary, RunError> {
    let (analysis, inputs) = compute(cfg)?;
    finish(&analysis, cfg, &inputs.digests)
}

/// Re-renders from a cached intermediate file without refitting models.
pub fn rerender(cfg: &RunConfig, intermediate: &Path) -> Result<RunSummary, RunError> {
    let findings = cfg.check();
    if let Some(f) = findings.iter().find(|f| f.is_fatal()) {
        return Err(RunError::new(FailureKind::Validation, &f.code, f.message.clone()));
    }
    let text = fs::read_to_string(intermediate).map_err(|e| {
        RunError::new(FailureKind::Data, codes::EVENTS_UNREADABLE, format!("{}: {e}", intermediate.display()))
    })?;
    let cached: Intermediate = serde_json::from_str(&text).map_err(|e| {
        RunError::new(FailureKind::Data, codes::EVENTS_UNREADABLE, format!("{}: {e}", intermediate.display()))
    })?;
    let analysis = analyze(cached.events, cached.findings, cfg)?;
    finish(&analysis, cfg, &cached.inputs)
}
