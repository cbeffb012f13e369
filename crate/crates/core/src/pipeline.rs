//! End-to-end orchestration: load inputs, compute abnormal series and
//! covariates per event, pool panels and run the cross-sectional analysis.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{codes, Finding, RunConfig};
use crate::cross_section::{correlations, descriptives, run_table4, CorrelationTable, Descriptive, RegressionGrid};
use crate::event_study::{figure_paths, pool_panel, EventStudyError, FigurePoint, PanelResult};
use crate::ingest::{
    load_asset_csv, load_events_csv, load_sentiment_csv, panel_mismatches, AssetSeries, EventRecord, Panel,
    SentimentIndex,
};
use crate::market_model::{abnormal_series, AbnormalSeries, Channel, ModelOptions, RelativeSeries};
use crate::metrics::{build_covariates, log_returns, log_volumes, CovariateRow, ReturnSeries};
use crate::window::RelWindow;

/// Failure classes, mapped to process exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FailureKind {
    Validation,
    Data,
    Numerical,
}

impl FailureKind {
    pub fn exit_code(&self) -> i32 {
        match self {
            FailureKind::Validation => 2,
            FailureKind::Data => 3,
            FailureKind::Numerical => 4,
        }
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
#[error("{code}: {message}")]
pub struct RunError {
    pub kind: FailureKind,
    pub code: String,
    pub message: String,
}

impl RunError {
    pub fn new(kind: FailureKind, code: &str, message: impl Into<String>) -> Self {
        Self {
            kind,
            code: code.into(),
            message: message.into(),
        }
    }

    /// Single-line JSON form for stderr.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({
            "error": { "kind": self.kind, "code": self.code, "message": self.message }
        })
        .to_string()
    }

    fn from_findings(findings: &[Finding]) -> Option<Self> {
        let f = findings.iter().find(|f| f.is_fatal())?;
        let kind = if f.code.as_str() < codes::EVENTS_UNREADABLE {
            FailureKind::Validation
        } else {
            FailureKind::Data
        };
        Some(Self::new(kind, &f.code, f.message.clone()))
    }
}

/// Loaded, immutable inputs plus SHA-256 digests of every file read.
#[derive(Clone, Debug)]
pub struct Inputs {
    pub events: Vec<EventRecord>,
    pub benchmark: AssetSeries,
    pub assets: BTreeMap<String, AssetSeries>,
    pub sentiment: SentimentIndex,
    /// Keyed by path as configured.
    pub digests: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn digest_file(path: &Path) -> Option<String> {
    fs::read(path).ok().map(|b| sha256_hex(&b))
}

/// Events with an id that belong to at least one requested panel, plus
/// everything in the all-events panel (the cross-section always uses it).
fn selected_events<'a>(events: &'a [EventRecord], cfg: &RunConfig) -> Vec<&'a EventRecord> {
    let mut out: Vec<&EventRecord> = events
        .iter()
        .filter(|e| e.event_id.is_some())
        .filter(|e| e.in_panel(Panel::All) || cfg.panels.iter().any(|p| e.in_panel(*p)))
        .collect();
    out.sort_by_key(|e| e.event_id);
    out
}

/// Reads every input. Problems are returned as findings; inputs are
/// returned only when no finding is fatal.
pub fn load_inputs(cfg: &RunConfig) -> (Option<Inputs>, Vec<Finding>) {
    let mut findings = Vec::new();
    let mut digests = BTreeMap::new();
    let mut record = |path: &Path| {
        if let Some(d) = digest_file(path) {
            digests.insert(path.display().to_string(), d);
        }
    };
    record(&cfg.events);
    record(&cfg.sentiment);
    let bench_path = cfg.asset_path(&cfg.benchmark);
    record(&bench_path);

    let events = load_events_csv(&cfg.events)
        .map_err(|e| findings.push(Finding::fatal(codes::EVENTS_UNREADABLE, e.to_string())))
        .ok();
    let sentiment = load_sentiment_csv(&cfg.sentiment)
        .map_err(|e| findings.push(Finding::fatal(codes::SENTIMENT_UNREADABLE, e.to_string())))
        .ok();
    let benchmark = if bench_path.is_file() {
        load_asset_csv(&bench_path, &cfg.benchmark)
            .map_err(|e| findings.push(Finding::fatal(codes::BENCHMARK_UNREADABLE, e.to_string()).ticker(&cfg.benchmark)))
            .ok()
    } else {
        findings.push(
            Finding::fatal(
                codes::BENCHMARK_UNREADABLE,
                format!("benchmark file {} not found", bench_path.display()),
            )
            .ticker(&cfg.benchmark),
        );
        None
    };

    let mut assets = BTreeMap::new();
    if let Some(events) = &events {
        for (id, tagged, canonical) in panel_mismatches(events) {
            let show = |s: &BTreeSet<Panel>| s.iter().map(|p| p.tag()).collect::<Vec<_>>().join("|");
            findings.push(
                Finding::warning(
                    codes::PANEL_MISMATCH,
                    format!("event {id} tagged {} but its id groups it under {}", show(&tagged), show(&canonical)),
                )
                .event(id),
            );
        }
        let selected = selected_events(events, cfg);
        if selected.is_empty() {
            findings.push(Finding::fatal(codes::NO_EVENTS, "registry selects no events".into()));
        }
        for e in selected {
            let id = e.event_id.expect("selected events have ids");
            if assets.contains_key(&e.ticker) {
                continue;
            }
            let path = cfg.asset_path(&e.ticker);
            if !path.is_file() {
                findings.push(
                    Finding::fatal(
                        codes::ASSET_MISSING,
                        format!("no data file {} for ticker {} (event {id})", path.display(), e.ticker),
                    )
                    .event(id)
                    .ticker(&e.ticker),
                );
                continue;
            }
            record(&path);
            match load_asset_csv(&path, &e.ticker) {
                Ok(s) => {
                    let zeros = s.zero_volume_days().len();
                    if zeros > 0 {
                        findings.push(
                            Finding::warning(
                                codes::ZERO_VOLUME,
                                format!("{}: {zeros} zero-volume days; log volume undefined there", e.ticker),
                            )
                            .ticker(&e.ticker)
                            .count(zeros),
                        );
                    }
                    assets.insert(e.ticker.clone(), s);
                }
                Err(err) => findings.push(
                    Finding::fatal(codes::ASSET_UNREADABLE, err.to_string())
                        .event(id)
                        .ticker(&e.ticker),
                ),
            }
        }
    }

    if findings.iter().any(Finding::is_fatal) {
        return (None, findings);
    }
    let inputs = Inputs {
        events: events.expect("no fatal findings"),
        benchmark: benchmark.expect("no fatal findings"),
        assets,
        sentiment: sentiment.expect("no fatal findings"),
        digests,
    };
    (Some(inputs), findings)
}

/// Per-event market-model output and covariates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventOutput {
    pub event_id: u32,
    pub ticker: String,
    pub panels: BTreeSet<Panel>,
    pub returns: Option<AbnormalSeries>,
    pub volumes: Option<AbnormalSeries>,
    pub covariates: Option<CovariateRow>,
}

struct Prepared {
    output: EventOutput,
    findings: Vec<Finding>,
}

fn prepare_event(
    e: &EventRecord,
    asset: &AssetSeries,
    bench: (&ReturnSeries, &ReturnSeries),
    inputs: &Inputs,
    cfg: &RunConfig,
) -> Prepared {
    let id = e.event_id.expect("selected events have ids");
    let mut findings = Vec::new();
    let est = cfg.estimation();
    let hor = cfg.horizon();
    let span = RelWindow::new(est.start.min(hor.start), est.end.max(hor.end));
    if !asset.spans(e.date, span) {
        findings.push(
            Finding::warning(
                codes::COVERAGE_GAP,
                format!(
                    "{} history {}..{} does not cover days {span} around {}",
                    e.ticker,
                    asset.first_date().map_or("-".into(), |d| d.to_string()),
                    asset.last_date().map_or("-".into(), |d| d.to_string()),
                    e.date
                ),
            )
            .event(id)
            .ticker(&e.ticker),
        );
    }
    let opts = ModelOptions {
        estimation_window: est,
        min_obs: cfg.min_coverage,
    };
    let returns = log_returns(asset).ok();
    let volumes = log_volumes(asset).series;
    let mut channel = |ch: Channel, series: Option<&ReturnSeries>, b: &ReturnSeries| {
        let result = match series {
            Some(s) => {
                let a = RelativeSeries::from_dated(s, e.date, span);
                let b = RelativeSeries::from_dated(b, e.date, span);
                abnormal_series(id, &e.ticker, &a, &b, ch, &opts, hor).map_err(|err| err.to_string())
            }
            None => Err("fewer than two price bars".to_string()),
        };
        result
            .map_err(|msg| {
                findings.push(
                    Finding::warning(codes::EVENT_EXCLUDED, format!("event {id} ({}) {ch}: {msg}", e.ticker))
                        .event(id)
                        .ticker(&e.ticker),
                )
            })
            .ok()
    };
    let ret = channel(Channel::Returns, returns.as_ref(), bench.0);
    let vol = channel(Channel::Volumes, Some(&volumes), bench.1);
    let covariates = match build_covariates(e, asset, &inputs.sentiment, est) {
        Ok(row) => {
            if row.sentiment_lag_days > 0 {
                findings.push(
                    Finding::warning(
                        codes::SENTIMENT_FALLBACK,
                        format!(
                            "event {id}: no sentiment reading on {}; used the reading {} day(s) earlier",
                            e.date, row.sentiment_lag_days
                        ),
                    )
                    .event(id)
                    .ticker(&e.ticker),
                );
            }
            Some(row)
        }
        Err(err) => {
            findings.push(
                Finding::warning(codes::COVARIATES_MISSING, format!("event {id}: {err}"))
                    .event(id)
                    .ticker(&e.ticker),
            );
            None
        }
    };
    Prepared {
        output: EventOutput {
            event_id: id,
            ticker: e.ticker.clone(),
            panels: e.panels.clone(),
            returns: ret,
            volumes: vol,
            covariates,
        },
        findings,
    }
}

/// Abnormal series and covariates for every selected event, in event-id
/// order. Events are processed in parallel.
pub fn prepare_events(inputs: &Inputs, cfg: &RunConfig) -> Result<(Vec<EventOutput>, Vec<Finding>), RunError> {
    let bench_r = log_returns(&inputs.benchmark).map_err(|e| {
        RunError::new(FailureKind::Data, codes::BENCHMARK_UNREADABLE, format!("benchmark: {e}"))
    })?;
    let bench_v = log_volumes(&inputs.benchmark).series;
    let selected = selected_events(&inputs.events, cfg);
    let prepared: Vec<Prepared> = selected
        .par_iter()
        .map(|e| prepare_event(e, &inputs.assets[&e.ticker], (&bench_r, &bench_v), inputs, cfg))
        .collect();
    let mut outputs = Vec::with_capacity(prepared.len());
    let mut findings = Vec::new();
    for p in prepared {
        outputs.push(p.output);
        findings.extend(p.findings);
    }
    Ok((outputs, findings))
}

/// Static checks plus everything loading and per-event preparation reports.
pub fn validate(cfg: &RunConfig) -> Vec<Finding> {
    let mut findings = cfg.check();
    if findings.iter().any(Finding::is_fatal) {
        return findings;
    }
    let (inputs, load) = load_inputs(cfg);
    findings.extend(load);
    if let Some(inputs) = inputs {
        match prepare_events(&inputs, cfg) {
            Ok((_, f)) => findings.extend(f),
            Err(e) => findings.push(Finding::fatal(&e.code, e.message)),
        }
    }
    findings
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FigureSet {
    pub panel: Panel,
    pub channel: Channel,
    /// `post` (from day 0) or `pre` (from the horizon start to day -1).
    pub kind: String,
    pub points: Vec<FigurePoint>,
}

/// All statistics of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub events: Vec<EventOutput>,
    pub panels: Vec<PanelResult>,
    pub figures: Vec<FigureSet>,
    pub table4: RegressionGrid,
    pub descriptives: Vec<Descriptive>,
    pub correlations: CorrelationTable,
    pub findings: Vec<Finding>,
}

impl Analysis {
    pub fn panel(&self, panel: Panel, channel: Channel) -> Option<&PanelResult> {
        self.panels.iter().find(|p| p.panel == panel && p.channel == channel)
    }
}

fn pool(
    panel: Panel,
    channel: Channel,
    events: &[EventOutput],
    cfg: &RunConfig,
) -> Result<PanelResult, EventStudyError> {
    let members: Vec<&AbnormalSeries> = events
        .iter()
        .filter(|e| e.panels.contains(&panel))
        .filter_map(|e| match channel {
            Channel::Returns => e.returns.as_ref(),
            Channel::Volumes => e.volumes.as_ref(),
        })
        .collect();
    pool_panel(panel, channel, &members, &cfg.window_specs(), cfg.horizon(), &cfg.pool)
}

/// Pools, figures and cross-section from prepared events. This is the part
/// `report` re-runs from the cached intermediate file.
pub fn analyze(events: Vec<EventOutput>, mut findings: Vec<Finding>, cfg: &RunConfig) -> Result<Analysis, RunError> {
    let mut panels_to_run: Vec<Panel> = cfg.panels.clone();
    if !panels_to_run.contains(&Panel::All) {
        panels_to_run.insert(0, Panel::All);
    }
    panels_to_run.sort();
    panels_to_run.dedup();

    let mut panels = Vec::new();
    for &panel in &panels_to_run {
        for channel in [Channel::Returns, Channel::Volumes] {
            match pool(panel, channel, &events, cfg) {
                Ok(r) => panels.push(r),
                Err(err) if panel == Panel::All => {
                    return Err(RunError::new(FailureKind::Numerical, codes::NO_EVENTS, err.to_string()));
                }
                Err(err) => findings.push(Finding::warning(codes::PANEL_SKIPPED, err.to_string())),
            }
        }
    }

    let hor = cfg.horizon();
    let mut figures = Vec::new();
    for r in panels.iter().filter(|r| cfg.panels.contains(&r.panel)) {
        for (kind, span) in [("pre", RelWindow::new(hor.start, -1)), ("post", RelWindow::new(0, hor.end))] {
            if !span.is_valid() {
                continue;
            }
            match figure_paths(r, span) {
                Ok(points) => figures.push(FigureSet {
                    panel: r.panel,
                    channel: r.channel,
                    kind: kind.into(),
                    points,
                }),
                Err(err) => findings.push(Finding::warning(codes::OUTPUT_SKIPPED, err.to_string())),
            }
        }
    }

    let all_r = panels
        .iter()
        .find(|p| p.panel == Panel::All && p.channel == Channel::Returns)
        .expect("all-events panel pooled");
    let all_v = panels
        .iter()
        .find(|p| p.panel == Panel::All && p.channel == Channel::Volumes)
        .expect("all-events panel pooled");
    let covariates: Vec<CovariateRow> = events
        .iter()
        .filter(|e| e.panels.contains(&Panel::All))
        .filter_map(|e| e.covariates.clone())
        .collect();
    let table4 = run_table4(all_r, all_v, &covariates, &cfg.scaling, &cfg.robust);
    for cell in &table4.cells {
        if let Some(err) = &cell.error {
            findings.push(Finding::warning(
                codes::OUTPUT_SKIPPED,
                format!("regression ({}) {} {}: {err}", cell.index, cell.dependent, cell.period),
            ));
        }
    }
    let descriptives = if covariates.is_empty() { Vec::new() } else { descriptives(&covariates) };
    let correlations = correlations(&covariates, all_r, all_v);
    findings.sort();
    findings.dedup();
    Ok(Analysis {
        events,
        panels,
        figures,
        table4,
        descriptives,
        correlations,
        findings,
    })
}

/// Validates, loads and analyzes. Does not write anything.
pub fn compute(cfg: &RunConfig) -> Result<(Analysis, Inputs), RunError> {
    let findings = cfg.check();
    if let Some(err) = RunError::from_findings(&findings) {
        return Err(err);
    }
    let (inputs, mut findings) = load_inputs(cfg);
    if let Some(err) = RunError::from_findings(&findings) {
        return Err(err);
    }
    let inputs = inputs.expect("no fatal findings");
    let (events, more) = prepare_events(&inputs, cfg)?;
    findings.extend(more);
    Ok((analyze(events, findings, cfg)?, inputs))
}
