//! Log returns, log volumes, estimation-window volatility, Amihud
//! illiquidity and the per-event covariate row.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{AssetSeries, EventRecord, SentimentIndex};
use crate::window::{offset, DateRange, RelWindow};

/// Minimum observations for volatility and illiquidity.
pub const MIN_WINDOW_OBS: usize = 20;
/// Illiquidity is reported per million units of traded value.
pub const AMIHUD_SCALE: f64 = 1e6;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("{ticker}: need at least 2 bars, have {have}")]
    TooFewBars { ticker: String, have: usize },
    #[error("need at least {need} observations in {window}, have {have}")]
    InsufficientObservations {
        window: DateRange,
        need: usize,
        have: usize,
    },
    #[error("event {event}: missing event id")]
    NoEventId { event: u32 },
    #[error("event {event_id} ({ticker}): no positive market cap on {date}")]
    MissingMarketCap {
        event_id: u32,
        ticker: String,
        date: NaiveDate,
    },
    #[error("event {event_id} ({ticker}): no sentiment reading on or within 3 days before {date}")]
    MissingSentiment {
        event_id: u32,
        ticker: String,
        date: NaiveDate,
    },
    #[error("event {event_id} ({ticker}): series starts {first}, after the event date {date}")]
    NotListed {
        event_id: u32,
        ticker: String,
        first: NaiveDate,
        date: NaiveDate,
    },
}

/// Values on ascending calendar days. Dates need not be contiguous.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReturnSeries {
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

impl ReturnSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, date: NaiveDate) -> Option<f64> {
        self.dates
            .binary_search(&date)
            .ok()
            .map(|i| self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (NaiveDate, f64)> + '_ {
        self.dates.iter().copied().zip(self.values.iter().copied())
    }

    pub fn in_window(&self, window: DateRange) -> impl Iterator<Item = (NaiveDate, f64)> + '_ {
        self.iter().filter(move |(d, _)| window.contains(*d))
    }
}

/// Daily log returns; defined at `t` only when bars exist at `t` and `t - 1`.
pub fn log_returns(series: &AssetSeries) -> Result<ReturnSeries, MetricsError> {
    let bars = series.bars();
    if bars.len() < 2 {
        return Err(MetricsError::TooFewBars {
            ticker: series.ticker.clone(),
            have: bars.len(),
        });
    }
    let mut out = ReturnSeries::default();
    for w in bars.windows(2) {
        if offset(w[0].date, 1) == w[1].date {
            out.dates.push(w[1].date);
            out.values.push(w[1].price.ln() - w[0].price.ln());
        }
    }
    Ok(out)
}

/// Log volumes plus the zero-volume days that were excluded.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LogVolumes {
    pub series: ReturnSeries,
    pub zero_volume_days: Vec<NaiveDate>,
}

pub fn log_volumes(series: &AssetSeries) -> LogVolumes {
    let mut out = LogVolumes::default();
    for b in series.bars() {
        if b.volume > 0.0 {
            out.series.dates.push(b.date);
            out.series.values.push(b.volume.ln());
        } else {
            out.zero_volume_days.push(b.date);
        }
    }
    out
}

fn sample_std(values: &[f64]) -> f64 {
    // Shifting by the first value keeps a constant series at exactly zero.
    let shift = values[0];
    let n = values.len() as f64;
    let mean = values.iter().map(|v| v - shift).sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - shift - mean).powi(2)).sum();
    (ss / (n - 1.0)).sqrt()
}

/// Sample standard deviation (denominator `n - 1`) of returns in `window`.
pub fn window_volatility(returns: &ReturnSeries, window: DateRange) -> Result<f64, MetricsError> {
    let vals: Vec<f64> = returns.in_window(window).map(|(_, v)| v).collect();
    if vals.len() < MIN_WINDOW_OBS {
        return Err(MetricsError::InsufficientObservations {
            window,
            need: MIN_WINDOW_OBS,
            have: vals.len(),
        });
    }
    Ok(sample_std(&vals))
}

/// Mean of `|r_t| / volume_t` over days in `window` with a defined return and
/// positive traded value, times [`AMIHUD_SCALE`].
pub fn amihud_illiquidity(
    returns: &ReturnSeries,
    series: &AssetSeries,
    window: DateRange,
) -> Result<f64, MetricsError> {
    let ratios: Vec<f64> = returns
        .in_window(window)
        .filter_map(|(d, r)| {
            let v = series.get(d)?.volume;
            (v > 0.0).then(|| r.abs() / v)
        })
        .collect();
    if ratios.len() < MIN_WINDOW_OBS {
        return Err(MetricsError::InsufficientObservations {
            window,
            need: MIN_WINDOW_OBS,
            have: ratios.len(),
        });
    }
    Ok(ratios.iter().sum::<f64>() / ratios.len() as f64 * AMIHUD_SCALE)
}

/// Per-event asset characteristics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovariateRow {
    pub event_id: u32,
    pub ticker: String,
    /// `ln(market cap)` on the event date.
    pub size: f64,
    /// Days between the first bar and the event date.
    pub age_days: i64,
    pub volatility: f64,
    /// Amihud ratio, already scaled by 10^6.
    pub illiquidity: f64,
    pub sentiment: f64,
    /// Non-zero when sentiment came from an earlier day.
    pub sentiment_lag_days: i64,
}

/// Days the asset has been listed as of `date`, counting from its first bar.
pub fn listing_age(series: &AssetSeries, date: NaiveDate) -> Option<i64> {
    let first = series.first_date()?;
    (first <= date).then(|| (date - first).num_days())
}

pub fn build_covariates(
    event: &EventRecord,
    series: &AssetSeries,
    sentiment: &SentimentIndex,
    estimation_window: RelWindow,
) -> Result<CovariateRow, MetricsError> {
    let event_id = event.event_id.ok_or(MetricsError::NoEventId {
        event: event.serial,
    })?;
    let ticker = event.ticker.clone();
    let first = series.first_date().ok_or_else(|| MetricsError::TooFewBars {
        ticker: ticker.clone(),
        have: 0,
    })?;
    if first > event.date {
        return Err(MetricsError::NotListed {
            event_id,
            ticker,
            first,
            date: event.date,
        });
    }
    let cap = series
        .get(event.date)
        .map(|b| b.market_cap)
        .filter(|c| *c > 0.0)
        .ok_or_else(|| MetricsError::MissingMarketCap {
            event_id,
            ticker: ticker.clone(),
            date: event.date,
        })?;
    let lookup = sentiment
        .lookup(event.date)
        .ok_or_else(|| MetricsError::MissingSentiment {
            event_id,
            ticker: ticker.clone(),
            date: event.date,
        })?;
    let returns = log_returns(series)?;
    let window = estimation_window.to_dates(event.date);
    Ok(CovariateRow {
        event_id,
        ticker,
        size: cap.ln(),
        age_days: (event.date - first).num_days(),
        volatility: window_volatility(&returns, window)?,
        illiquidity: amihud_illiquidity(&returns, series, window)?,
        sentiment: lookup.point.value,
        sentiment_lag_days: lookup.lag_days,
    })
}
