//! Single-factor market model and abnormal series.
//!
//! The model `asset_t = alpha + beta * benchmark_t + e_t` is fitted by OLS on
//! the estimation window with pairwise deletion of missing days, then used to
//! produce abnormal values for every day of the span where both sides exist.

use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::ReturnSeries;
use crate::window::{offset, RelWindow, SPAN_END, SPAN_START};

/// Default minimum number of paired estimation days.
pub const MIN_COVERAGE: usize = 100;

/// Resolution of the dyadic grid abnormal values are stored on.
///
/// Values on this grid with magnitude below `2^12` add without rounding, so
/// window sums are exact and independent of summation order.
pub const GRID: f64 = (1u64 << 40) as f64;

/// Rounds `x` to the nearest multiple of `2^-40`.
pub fn snap(x: f64) -> f64 {
    (x * GRID).round() / GRID
}

#[derive(Debug, Error, PartialEq)]
pub enum MarketModelError {
    #[error("{channel}: {have} paired estimation days, need {need}")]
    InsufficientPairs {
        channel: Channel,
        have: usize,
        need: usize,
    },
    #[error("{channel}: benchmark has zero variance over the estimation window")]
    ZeroBenchmarkVariance { channel: Channel },
    #[error("window {window} lies outside the supported span [{SPAN_START}, {SPAN_END}]")]
    OutsideSpan { window: RelWindow },
}

/// Which observable a model is fitted to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Channel {
    Returns,
    Volumes,
}

impl Channel {
    /// Label of a single-day abnormal value.
    pub fn day_label(&self) -> &'static str {
        match self {
            Channel::Returns => "AR",
            Channel::Volumes => "AV",
        }
    }

    /// Label of a cumulated abnormal value.
    pub fn window_label(&self) -> &'static str {
        match self {
            Channel::Returns => "CAR",
            Channel::Volumes => "CAV",
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Channel::Returns => "returns",
            Channel::Volumes => "volumes",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A series indexed by day relative to an event; `None` marks missing days.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelativeSeries {
    pub start: i32,
    pub values: Vec<Option<f64>>,
}

impl RelativeSeries {
    pub fn from_fn(window: RelWindow, f: impl Fn(i32) -> Option<f64>) -> Self {
        Self {
            start: window.start,
            values: window.days().map(f).collect(),
        }
    }

    /// Re-indexes dated values around `event_date` over `window`.
    pub fn from_dated(series: &ReturnSeries, event_date: NaiveDate, window: RelWindow) -> Self {
        Self::from_fn(window, |day| series.get(offset(event_date, day)))
    }

    pub fn window(&self) -> RelWindow {
        RelWindow::new(self.start, self.start + self.values.len() as i32 - 1)
    }

    pub fn get(&self, day: i32) -> Option<f64> {
        let i = day - self.start;
        if i < 0 {
            return None;
        }
        self.values.get(i as usize).copied().flatten()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketModelFit {
    pub channel: Channel,
    pub alpha: f64,
    pub beta: f64,
    /// `sqrt(SSE / (n - 2))`.
    pub residual_std: f64,
    pub n_obs: usize,
    /// Mean of the benchmark over the paired estimation days.
    pub benchmark_mean: f64,
    /// Sum of squared benchmark deviations over the paired estimation days.
    pub benchmark_ss: f64,
}

impl MarketModelFit {
    pub fn expected(&self, benchmark: f64) -> f64 {
        self.alpha + self.beta * benchmark
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelOptions {
    pub estimation_window: RelWindow,
    pub min_obs: usize,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self {
            estimation_window: RelWindow::ESTIMATION,
            min_obs: MIN_COVERAGE,
        }
    }
}

/// OLS fit of `asset` on `benchmark` over the days of `estimation_window`
/// where both are defined.
pub fn fit_market_model(
    asset: &RelativeSeries,
    benchmark: &RelativeSeries,
    channel: Channel,
    opts: &ModelOptions,
) -> Result<MarketModelFit, MarketModelError> {
    let pairs: Vec<(f64, f64)> = opts
        .estimation_window
        .days()
        .filter_map(|d| Some((benchmark.get(d)?, asset.get(d)?)))
        .collect();
    let need = opts.min_obs.max(3);
    if pairs.len() < need {
        return Err(MarketModelError::InsufficientPairs {
            channel,
            have: pairs.len(),
            need,
        });
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for &(x, y) in &pairs {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if !(sxx > 0.0) {
        return Err(MarketModelError::ZeroBenchmarkVariance { channel });
    }
    let beta = sxy / sxx;
    let alpha = my - beta * mx;
    let sse: f64 = pairs
        .iter()
        .map(|&(x, y)| {
            let e = y - (alpha + beta * x);
            e * e
        })
        .sum();
    Ok(MarketModelFit {
        channel,
        alpha,
        beta,
        residual_std: (sse / (n - 2.0)).sqrt(),
        n_obs: pairs.len(),
        benchmark_mean: mx,
        benchmark_ss: sxx,
    })
}

/// Abnormal values for one event and channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbnormalSeries {
    pub event_id: u32,
    pub ticker: String,
    pub channel: Channel,
    pub estimation_window: RelWindow,
    pub fit: MarketModelFit,
    /// Abnormal values on the [`GRID`]; `None` where either side is missing.
    pub abnormal: RelativeSeries,
    /// Benchmark values over the same days, kept for standardized tests.
    pub benchmark: RelativeSeries,
}

impl AbnormalSeries {
    pub fn get(&self, day: i32) -> Option<f64> {
        self.abnormal.get(day)
    }

    pub fn span(&self) -> RelWindow {
        self.abnormal.window()
    }
}

/// Fits the model on the estimation window and computes abnormal values over
/// the estimation window and `horizon`.
pub fn abnormal_series(
    event_id: u32,
    ticker: &str,
    asset: &RelativeSeries,
    benchmark: &RelativeSeries,
    channel: Channel,
    opts: &ModelOptions,
    horizon: RelWindow,
) -> Result<AbnormalSeries, MarketModelError> {
    for w in [horizon, opts.estimation_window] {
        if !w.is_valid() || !RelWindow::SPAN.contains_window(&w) {
            return Err(MarketModelError::OutsideSpan { window: w });
        }
    }
    let fit = fit_market_model(asset, benchmark, channel, opts)?;
    let span = RelWindow::new(
        opts.estimation_window.start.min(horizon.start),
        opts.estimation_window.end.max(horizon.end),
    );
    let abnormal = RelativeSeries::from_fn(span, |d| {
        let (a, b) = (asset.get(d)?, benchmark.get(d)?);
        Some(snap(a - fit.expected(b)))
    });
    let benchmark = RelativeSeries::from_fn(span, |d| benchmark.get(d));
    Ok(AbnormalSeries {
        event_id,
        ticker: ticker.to_string(),
        channel,
        estimation_window: opts.estimation_window,
        fit,
        abnormal,
        benchmark,
    })
}
