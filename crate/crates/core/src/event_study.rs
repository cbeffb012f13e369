//! Window cumulation and cross-event pooling of abnormal series.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inference::{t_test, wilcoxon_signed_rank_with, TestFlag, TestResult, WilcoxonOptions};
use crate::ingest::Panel;
use crate::market_model::{snap, AbnormalSeries, Channel};
use crate::window::RelWindow;

/// Normal critical value for a two-sided 90% band.
pub const BAND_Z90: f64 = 1.645;

#[derive(Debug, Error, PartialEq)]
pub enum EventStudyError {
    #[error("event {event_id}: day {day} undefined inside window {window}")]
    UndefinedDay {
        event_id: u32,
        day: i32,
        window: RelWindow,
    },
    #[error("panel {panel} ({channel}) has no events")]
    EmptyPanel { panel: Panel, channel: Channel },
    #[error("event id {0} appears twice in one panel")]
    DuplicateEvent(u32),
    #[error("series for event {event_id} is {channel}, panel is {expected}")]
    ChannelMismatch {
        event_id: u32,
        channel: Channel,
        expected: Channel,
    },
    #[error("requested days {requested} not covered by pooled days {available}")]
    DaysNotCovered {
        requested: RelWindow,
        available: RelWindow,
    },
    #[error("invalid window `{0}`")]
    InvalidWindow(String),
}

/// A labelled, inclusive event window.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub label: String,
    pub window: RelWindow,
}

impl WindowSpec {
    pub fn new(start: i32, end: i32) -> Self {
        let window = RelWindow::new(start, end);
        Self {
            label: window.to_string(),
            window,
        }
    }

    /// Parses `start,end` or `[start, end]`.
    pub fn parse(text: &str) -> Result<Self, EventStudyError> {
        let inner = text.trim().trim_start_matches('[').trim_end_matches(']');
        let mut it = inner.split(',').map(str::trim);
        let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
            return Err(EventStudyError::InvalidWindow(text.into()));
        };
        let (Ok(a), Ok(b)) = (a.parse::<i32>(), b.parse::<i32>()) else {
            return Err(EventStudyError::InvalidWindow(text.into()));
        };
        let spec = Self::new(a, b);
        if !spec.window.is_valid() || !RelWindow::SPAN.contains_window(&spec.window) {
            return Err(EventStudyError::InvalidWindow(text.into()));
        }
        Ok(spec)
    }

    /// The five windows of the pooled event tables.
    pub fn table_defaults() -> Vec<WindowSpec> {
        [(-7, -1), (0, 2), (0, 6), (0, 13), (0, 30)]
            .into_iter()
            .map(|(a, b)| WindowSpec::new(a, b))
            .collect()
    }
}

/// Sum of abnormal values over `window`. Values are snapped to the
/// [`crate::market_model::GRID`] so the sum is exact.
pub fn car(series: &AbnormalSeries, window: RelWindow) -> Result<f64, EventStudyError> {
    let mut sum = 0.0;
    for day in window.days() {
        let v = series.get(day).ok_or(EventStudyError::UndefinedDay {
            event_id: series.event_id,
            day,
            window,
        })?;
        sum += snap(v);
    }
    Ok(sum)
}

/// CAR divided by its forecast-error-adjusted standard deviation under the
/// fitted market model.
pub fn standardized_car(series: &AbnormalSeries, window: RelWindow) -> Result<f64, EventStudyError> {
    let c = car(series, window)?;
    let fit = &series.fit;
    let len = window.len() as f64;
    let t = fit.n_obs as f64;
    let mut bench_dev = 0.0;
    for day in window.days() {
        let b = series.benchmark.get(day).ok_or(EventStudyError::UndefinedDay {
            event_id: series.event_id,
            day,
            window,
        })?;
        bench_dev += b - fit.benchmark_mean;
    }
    let var = fit.residual_std.powi(2) * (len + len * len / t + bench_dev * bench_dev / fit.benchmark_ss);
    Ok(c / var.sqrt())
}

/// Cross-sectional statistic reported in the t column.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TStatistic {
    /// Plain t on raw CARs.
    #[default]
    Plain,
    /// t on standardized CARs.
    Standardized,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoolOptions {
    pub t_statistic: TStatistic,
    pub wilcoxon: WilcoxonOptions,
}

impl Default for PoolOptions {
    fn default() -> Self {
        Self {
            t_statistic: TStatistic::Plain,
            wilcoxon: WilcoxonOptions::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventValue {
    pub event_id: u32,
    pub value: f64,
}

/// Statistics of one window or one day across the events of a panel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossEventStat {
    pub values: Vec<EventValue>,
    /// Events missing a day inside the window.
    pub excluded: Vec<u32>,
    pub mean: f64,
    pub t: TestResult,
    pub z: TestResult,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowResult {
    pub spec: WindowSpec,
    pub stat: CrossEventStat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DayResult {
    pub day: i32,
    pub stat: CrossEventStat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PanelResult {
    pub panel: Panel,
    pub channel: Channel,
    pub event_ids: Vec<u32>,
    pub windows: Vec<WindowResult>,
    pub days: Vec<DayResult>,
}

impl PanelResult {
    pub fn day_span(&self) -> Option<RelWindow> {
        Some(RelWindow::new(self.days.first()?.day, self.days.last()?.day))
    }

    pub fn day(&self, day: i32) -> Option<&DayResult> {
        self.days.iter().find(|d| d.day == day)
    }

    pub fn window(&self, window: RelWindow) -> Option<&WindowResult> {
        self.windows.iter().find(|w| w.spec.window == window)
    }

    /// Per-event sum over `window` rebuilt from the day block, for events with
    /// every day defined. Exact, so it equals [`car`] on the source series.
    pub fn event_sums(&self, window: RelWindow) -> Result<Vec<EventValue>, EventStudyError> {
        let available = self.day_span().unwrap_or(RelWindow::new(1, 0));
        if !available.contains_window(&window) {
            return Err(EventStudyError::DaysNotCovered {
                requested: window,
                available,
            });
        }
        let mut out = Vec::new();
        'events: for &id in &self.event_ids {
            let mut sum = 0.0;
            for day in window.days() {
                let d = self.day(day).expect("covered");
                match d.stat.values.iter().find(|v| v.event_id == id) {
                    Some(v) => sum += snap(v.value),
                    None => continue 'events,
                }
            }
            out.push(EventValue { event_id: id, value: sum });
        }
        Ok(out)
    }
}

fn mean_of(values: &[f64]) -> f64 {
    if values.is_empty() {
        f64::NAN
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Mean ± [`BAND_Z90`] standard errors; NaN when fewer than two values.
fn band(values: &[f64], mean: f64) -> (f64, f64) {
    let n = values.len();
    if n < 2 {
        return (f64::NAN, f64::NAN);
    }
    let nf = n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let se = (ss / (nf - 1.0)).sqrt() / nf.sqrt();
    (mean - BAND_Z90 * se, mean + BAND_Z90 * se)
}

fn too_few(n: usize) -> TestResult {
    TestResult {
        statistic: f64::NAN,
        n_effective: n,
        p_value: None,
        stars: Default::default(),
        flag: Some(TestFlag::TooFew),
    }
}

fn cross_event(
    values: Vec<EventValue>,
    excluded: Vec<u32>,
    t_values: Option<Vec<f64>>,
    opts: &PoolOptions,
) -> CrossEventStat {
    let raw: Vec<f64> = values.iter().map(|v| v.value).collect();
    let mean = mean_of(&raw);
    let (t, z) = if raw.len() < 2 {
        (too_few(raw.len()), too_few(raw.len()))
    } else {
        let t = match &t_values {
            Some(std) => t_test(std),
            None => t_test(&raw),
        };
        (t, wilcoxon_signed_rank_with(&raw, opts.wilcoxon))
    };
    let (ci_low, ci_high) = band(&raw, mean);
    CrossEventStat {
        values,
        excluded,
        mean,
        t,
        z,
        ci_low,
        ci_high,
    }
}

/// Pools the events of one panel and channel over `windows` and each day of
/// `days`. Events are processed in ascending event-id order.
pub fn pool_panel(
    panel: Panel,
    channel: Channel,
    events: &[&AbnormalSeries],
    windows: &[WindowSpec],
    days: RelWindow,
    opts: &PoolOptions,
) -> Result<PanelResult, EventStudyError> {
    if events.is_empty() {
        return Err(EventStudyError::EmptyPanel { panel, channel });
    }
    let mut sorted: Vec<&AbnormalSeries> = events.to_vec();
    sorted.sort_by_key(|e| e.event_id);
    let mut seen = BTreeSet::new();
    for e in &sorted {
        if e.channel != channel {
            return Err(EventStudyError::ChannelMismatch {
                event_id: e.event_id,
                channel: e.channel,
                expected: channel,
            });
        }
        if !seen.insert(e.event_id) {
            return Err(EventStudyError::DuplicateEvent(e.event_id));
        }
    }

    let collect = |window: RelWindow| {
        let mut values = Vec::new();
        let mut excluded = Vec::new();
        let mut standardized = Vec::new();
        for e in &sorted {
            match car(e, window) {
                Ok(v) => {
                    values.push(EventValue { event_id: e.event_id, value: v });
                    if opts.t_statistic == TStatistic::Standardized {
                        if let Ok(s) = standardized_car(e, window) {
                            standardized.push(s);
                        }
                    }
                }
                Err(_) => excluded.push(e.event_id),
            }
        }
        let t_values = (opts.t_statistic == TStatistic::Standardized).then_some(standardized);
        cross_event(values, excluded, t_values, opts)
    };

    let windows = windows
        .iter()
        .map(|spec| WindowResult {
            spec: spec.clone(),
            stat: collect(spec.window),
        })
        .collect();
    let days = days
        .days()
        .map(|day| DayResult {
            day,
            stat: collect(RelWindow::new(day, day)),
        })
        .collect();
    Ok(PanelResult {
        panel,
        channel,
        event_ids: sorted.iter().map(|e| e.event_id).collect(),
        windows,
        days,
    })
}

/// One point of a cumulative figure path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FigurePoint {
    pub relative_day: i32,
    pub n: usize,
    pub cum_mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Cross-event mean of each event's running sum from `span.start`, with a
/// 90% band from the cross-event standard error of the running sums. An event
/// leaves the path at its first undefined day.
pub fn figure_paths(result: &PanelResult, span: RelWindow) -> Result<Vec<FigurePoint>, EventStudyError> {
    let available = result.day_span().unwrap_or(RelWindow::new(1, 0));
    if !available.contains_window(&span) {
        return Err(EventStudyError::DaysNotCovered {
            requested: span,
            available,
        });
    }
    let mut running: Vec<Option<f64>> = vec![Some(0.0); result.event_ids.len()];
    let mut out = Vec::with_capacity(span.len());
    for day in span.days() {
        let d = result.day(day).expect("covered");
        for (slot, id) in running.iter_mut().zip(&result.event_ids) {
            *slot = match (*slot, d.stat.values.iter().find(|v| v.event_id == *id)) {
                (Some(acc), Some(v)) => Some(acc + snap(v.value)),
                _ => None,
            };
        }
        let live: Vec<f64> = running.iter().flatten().copied().collect();
        let cum_mean = mean_of(&live);
        let (ci_low, ci_high) = band(&live, cum_mean);
        out.push(FigurePoint {
            relative_day: day,
            n: live.len(),
            cum_mean,
            ci_low,
            ci_high,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_model::{MarketModelFit, RelativeSeries};

    pub(crate) fn series(event_id: u32, f: impl Fn(i32) -> Option<f64>) -> AbnormalSeries {
        let span = RelWindow::SPAN;
        AbnormalSeries {
            event_id,
            ticker: format!("T{event_id}"),
            channel: Channel::Returns,
            estimation_window: RelWindow::ESTIMATION,
            fit: MarketModelFit {
                channel: Channel::Returns,
                alpha: 0.0,
                beta: 1.0,
                residual_std: 0.01,
                n_obs: 141,
                benchmark_mean: 0.0,
                benchmark_ss: 0.05,
            },
            abnormal: RelativeSeries::from_fn(span, |d| f(d).map(snap)),
            benchmark: RelativeSeries::from_fn(span, |_| Some(0.0)),
        }
    }

    #[test]
    fn car_of_zero_series() {
        let s = series(1, |_| Some(0.0));
        for w in WindowSpec::table_defaults() {
            assert_eq!(car(&s, w.window).unwrap(), 0.0);
        }
    }

    #[test]
    fn car_of_constant_days() {
        let s = series(1, |d| Some(if (0..=6).contains(&d) { -0.01 } else { 0.0 }));
        assert_eq!(car(&s, RelWindow::new(0, 6)).unwrap(), 7.0 * snap(-0.01));
        assert!((car(&s, RelWindow::new(0, 6)).unwrap() + 0.07).abs() < 1e-11);
    }

    #[test]
    fn car_undefined_day() {
        let s = series(4, |d| (d != 2).then_some(0.01));
        assert_eq!(
            car(&s, RelWindow::new(0, 6)).unwrap_err(),
            EventStudyError::UndefinedDay { event_id: 4, day: 2, window: RelWindow::new(0, 6) }
        );
        assert!(car(&s, RelWindow::new(3, 6)).is_ok());
    }

    #[test]
    fn single_event_panel() {
        let s = series(1, |d| Some(0.001 * d as f64));
        let r = pool_panel(Panel::All, Channel::Returns, &[&s], &WindowSpec::table_defaults(), RelWindow::HORIZON, &PoolOptions::default()).unwrap();
        let w = &r.windows[2];
        assert_eq!(w.stat.mean, car(&s, RelWindow::new(0, 6)).unwrap());
        assert_eq!(w.stat.t.flag, Some(TestFlag::TooFew));
        assert_eq!(w.stat.z.flag, Some(TestFlag::TooFew));
    }

    #[test]
    fn symmetric_pair_has_zero_t() {
        let a = series(1, |_| Some(0.01));
        let b = series(2, |_| Some(-0.01));
        let r = pool_panel(Panel::All, Channel::Returns, &[&a, &b], &WindowSpec::table_defaults(), RelWindow::HORIZON, &PoolOptions::default()).unwrap();
        for w in &r.windows {
            assert_eq!(w.stat.mean, 0.0);
            assert_eq!(w.stat.t.statistic, 0.0);
        }
    }

    #[test]
    fn empty_and_duplicate_panels() {
        let err = pool_panel(Panel::Bittrex, Channel::Returns, &[], &[], RelWindow::HORIZON, &PoolOptions::default()).unwrap_err();
        assert!(matches!(err, EventStudyError::EmptyPanel { .. }));
        let a = series(1, |_| Some(0.0));
        let err = pool_panel(Panel::All, Channel::Returns, &[&a, &a], &[], RelWindow::HORIZON, &PoolOptions::default()).unwrap_err();
        assert_eq!(err, EventStudyError::DuplicateEvent(1));
    }

    #[test]
    fn exclusions_are_per_window() {
        let a = series(1, |_| Some(0.01));
        let b = series(2, |d| (d != 20).then_some(0.02));
        let r = pool_panel(Panel::All, Channel::Returns, &[&a, &b], &WindowSpec::table_defaults(), RelWindow::HORIZON, &PoolOptions::default()).unwrap();
        assert_eq!(r.windows[2].stat.values.len(), 2);
        assert_eq!(r.windows[4].stat.values.len(), 1);
        assert_eq!(r.windows[4].stat.excluded, vec![2]);
    }

    #[test]
    fn figure_path_of_zero_panel() {
        let a = series(1, |_| Some(0.0));
        let b = series(2, |_| Some(0.0));
        let r = pool_panel(Panel::All, Channel::Returns, &[&a, &b], &[], RelWindow::HORIZON, &PoolOptions::default()).unwrap();
        let path = figure_paths(&r, RelWindow::new(0, 30)).unwrap();
        assert_eq!(path.len(), 31);
        assert!(path.iter().all(|p| p.cum_mean == 0.0 && p.ci_low == 0.0 && p.ci_high == 0.0));
    }

    #[test]
    fn figure_path_identical_events() {
        let f = |d: i32| Some(0.003 * d as f64 - 0.01);
        let a = series(1, f);
        let b = series(2, f);
        let r = pool_panel(Panel::All, Channel::Returns, &[&a, &b], &[], RelWindow::HORIZON, &PoolOptions::default()).unwrap();
        let path = figure_paths(&r, RelWindow::new(-7, -1)).unwrap();
        for p in &path {
            let own = car(&a, RelWindow::new(-7, p.relative_day)).unwrap();
            assert_eq!(p.cum_mean, own);
            assert_eq!(p.ci_high - p.ci_low, 0.0);
        }
        assert!(figure_paths(&r, RelWindow::new(-8, 0)).is_err());
    }

    #[test]
    fn window_parsing() {
        assert_eq!(WindowSpec::parse("[0, 6]").unwrap().window, RelWindow::new(0, 6));
        assert_eq!(WindowSpec::parse("-7,-1").unwrap().label, "[-7, -1]");
        assert!(WindowSpec::parse("6,0").is_err());
        assert!(WindowSpec::parse("0,31").is_err());
        assert!(WindowSpec::parse("x").is_err());
    }

    #[test]
    fn standardized_car_scales_with_residual_std() {
        let s = series(1, |_| Some(0.01));
        let z = standardized_car(&s, RelWindow::new(0, 0)).unwrap();
        // var = 0.01^2 * (1 + 1/141)
        let want = 0.01 / (1e-4f64 * (1.0 + 1.0 / 141.0)).sqrt();
        assert!((z - want).abs() < 1e-9);
    }
}
