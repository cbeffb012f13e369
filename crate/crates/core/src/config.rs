//! Run configuration and its static validation.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cross_section::{RobustConfig, ScalingPolicy};
use crate::event_study::{PoolOptions, WindowSpec};
use crate::ingest::Panel;
use crate::market_model::MIN_COVERAGE;
use crate::window::RelWindow;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Markdown,
}

impl Format {
    pub const ALL: [Format; 3] = [Format::Csv, Format::Json, Format::Markdown];

    pub fn extension(&self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::Markdown => "md",
        }
    }
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "markdown" | "md" => Ok(Format::Markdown),
            other => Err(format!("unknown format `{other}`")),
        }
    }
}

/// Everything a run depends on. Windows are `[start, end]` pairs of days
/// relative to the event date, both ends inclusive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Directory holding one `<TICKER>.csv` per asset and the benchmark.
    pub data_dir: PathBuf,
    pub events: PathBuf,
    pub sentiment: PathBuf,
    pub benchmark: String,
    pub estimation_window: [i32; 2],
    pub horizon: [i32; 2],
    pub windows: Vec<[i32; 2]>,
    pub panels: Vec<Panel>,
    pub min_coverage: usize,
    pub pool: PoolOptions,
    pub robust: RobustConfig,
    pub scaling: ScalingPolicy,
    #[serde(skip_serializing)]
    pub output_dir: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("data"),
            events: PathBuf::from("events.csv"),
            sentiment: PathBuf::from("sentiment.csv"),
            benchmark: "BTC".into(),
            estimation_window: [RelWindow::ESTIMATION.start, RelWindow::ESTIMATION.end],
            horizon: [RelWindow::HORIZON.start, RelWindow::HORIZON.end],
            windows: WindowSpec::table_defaults()
                .iter()
                .map(|w| [w.window.start, w.window.end])
                .collect(),
            panels: Panel::ALL_PANELS.to_vec(),
            min_coverage: MIN_COVERAGE,
            pool: PoolOptions::default(),
            robust: RobustConfig::default(),
            scaling: ScalingPolicy::default(),
            output_dir: PathBuf::from("out"),
            formats: Format::ALL.to_vec(),
        }
    }
}

impl RunConfig {
    /// Relative paths inside the file are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        if let Some(base) = path.parent() {
            for p in [&mut cfg.data_dir, &mut cfg.events, &mut cfg.sentiment, &mut cfg.output_dir] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string().replace('\n', " "))
    }

    pub fn estimation(&self) -> RelWindow {
        RelWindow::new(self.estimation_window[0], self.estimation_window[1])
    }

    pub fn horizon(&self) -> RelWindow {
        RelWindow::new(self.horizon[0], self.horizon[1])
    }

    pub fn window_specs(&self) -> Vec<WindowSpec> {
        self.windows.iter().map(|[a, b]| WindowSpec::new(*a, *b)).collect()
    }

    pub fn asset_path(&self, ticker: &str) -> PathBuf {
        self.data_dir.join(format!("{ticker}.csv"))
    }

    /// Configuration problems detectable without reading any input.
    pub fn check(&self) -> Vec<Finding> {
        let mut out = Vec::new();
        let est = self.estimation();
        let hor = self.horizon();
        for (name, w) in [("estimation window", est), ("horizon", hor)] {
            if !w.is_valid() || !RelWindow::SPAN.contains_window(&w) {
                out.push(Finding::fatal(
                    codes::WINDOW_INVALID,
                    format!("{name} {w} must be non-empty and inside {}", RelWindow::SPAN),
                ));
            }
        }
        if est.end >= 0 || est.end >= hor.start {
            out.push(Finding::fatal(
                codes::WINDOW_OVERLAP,
                format!("estimation window {est} must end before the horizon {hor} and before day 0"),
            ));
        }
        if !hor.contains(0) {
            out.push(Finding::fatal(
                codes::WINDOW_INVALID,
                format!("horizon {hor} must contain day 0"),
            ));
        }
        if self.windows.is_empty() {
            out.push(Finding::fatal(codes::WINDOW_INVALID, "no event windows configured".into()));
        }
        for w in self.window_specs() {
            if !w.window.is_valid() || !hor.contains_window(&w.window) {
                out.push(Finding::fatal(
                    codes::WINDOW_INVALID,
                    format!("event window {} must be non-empty and inside the horizon {hor}", w.window),
                ));
            }
        }
        if self.panels.is_empty() {
            out.push(Finding::fatal(codes::CONFIG_INVALID, "no panels selected".into()));
        }
        if self.formats.is_empty() {
            out.push(Finding::fatal(codes::CONFIG_INVALID, "no output formats selected".into()));
        }
        if self.min_coverage < 3 {
            out.push(Finding::fatal(
                codes::CONFIG_INVALID,
                format!("min_coverage {} is below 3", self.min_coverage),
            ));
        }
        if self.min_coverage > est.len() {
            out.push(Finding::fatal(
                codes::CONFIG_INVALID,
                format!("min_coverage {} exceeds the {}-day estimation window", self.min_coverage, est.len()),
            ));
        }
        if self.scaling.age_divisor.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            out.push(Finding::fatal(codes::CONFIG_INVALID, "scaling.age_divisor must be positive".into()));
        }
        if out.is_empty() {
            if let Err(msg) = probe_writable(&self.output_dir) {
                    out.push(Finding::fatal(codes::OUTPUT_NOT_WRITABLE, msg));
            }
        }
        out
    }
}

fn probe_writable(dir: &Path) -> Result<(), String> {
    let fail = |e: std::io::Error| format!("output directory {} is not writable: {e}", dir.display());
    fs::create_dir_all(dir).map_err(fail)?;
    let probe = dir.join(".write-probe");
    fs::write(&probe, b"").map_err(fail)?;
    fs::remove_file(&probe).map_err(fail)
}

/// Stable finding codes. `E` codes are fatal, `W` codes are warnings.
pub mod codes {
    pub const CONFIG_INVALID: &str = "E001";
    pub const WINDOW_INVALID: &str = "E002";
    pub const WINDOW_OVERLAP: &str = "E003";
    pub const OUTPUT_NOT_WRITABLE: &str = "E004";
    pub const EVENTS_UNREADABLE: &str = "E010";
    pub const SENTIMENT_UNREADABLE: &str = "E011";
    pub const BENCHMARK_UNREADABLE: &str = "E012";
    pub const ASSET_MISSING: &str = "E013";
    pub const ASSET_UNREADABLE: &str = "E014";
    pub const NO_EVENTS: &str = "E020";
    pub const EVENT_EXCLUDED: &str = "W101";
    pub const COVERAGE_GAP: &str = "W102";
    pub const SENTIMENT_FALLBACK: &str = "W103";
    pub const COVARIATES_MISSING: &str = "W104";
    pub const PANEL_MISMATCH: &str = "W105";
    pub const ZERO_VOLUME: &str = "W106";
    pub const PANEL_SKIPPED: &str = "W107";
    pub const OUTPUT_SKIPPED: &str = "W108";
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Fatal,
    Warning,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Finding {
    pub code: String,
    pub severity: Severity,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub event_id: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ticker: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub count: Option<usize>,
    pub message: String,
}

impl Finding {
    pub fn fatal(code: &str, message: String) -> Self {
        Self::new(code, Severity::Fatal, message)
    }

    pub fn warning(code: &str, message: String) -> Self {
        Self::new(code, Severity::Warning, message)
    }

    fn new(code: &str, severity: Severity, message: String) -> Self {
        Self {
            code: code.into(),
            severity,
            event_id: None,
            ticker: None,
            count: None,
            message,
        }
    }

    pub fn event(mut self, event_id: u32) -> Self {
        self.event_id = Some(event_id);
        self
    }

    pub fn ticker(mut self, ticker: &str) -> Self {
        self.ticker = Some(ticker.into());
        self
    }

    pub fn count(mut self, count: usize) -> Self {
        self.count = Some(count);
        self
    }

    pub fn is_fatal(&self) -> bool {
        self.severity == Severity::Fatal
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.code, self.message)
    }
}
