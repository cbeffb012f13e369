//! Optional market-data client for CoinGecko-style `market_chart/range`
//! endpoints. Raw responses are cached on disk, one JSON file per
//! `(ticker, range)`, so reruns never touch the network.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{DateTime, NaiveDate, NaiveTime};
use serde::Deserialize;

use super::{AssetSeries, DailyBar, IngestError};
use crate::window::DateRange;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

/// Minimal blocking GET.
pub trait Transport {
    fn get(&self, url: &str) -> Result<HttpResponse, String>;
}

#[derive(Clone, Debug)]
pub struct FetchConfig {
    pub cache_dir: PathBuf,
    pub vs_currency: String,
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl FetchConfig {
    pub fn new(cache_dir: impl Into<PathBuf>) -> Self {
        Self {
            cache_dir: cache_dir.into(),
            vs_currency: "usd".into(),
            max_retries: 4,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(8),
        }
    }

    fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }

    pub fn cache_path(&self, ticker: &str, range: DateRange) -> PathBuf {
        self.cache_dir
            .join(format!("{}_{}_{}.json", ticker, range.start, range.end))
    }
}

pub fn request_url(endpoint: &str, ticker: &str, range: DateRange, vs_currency: &str) -> String {
    let from = range.start.and_time(NaiveTime::MIN).and_utc().timestamp();
    let to = range
        .end
        .and_time(NaiveTime::from_hms_opt(23, 59, 59).unwrap())
        .and_utc()
        .timestamp();
    format!(
        "{}/coins/{}/market_chart/range?vs_currency={}&from={}&to={}",
        endpoint.trim_end_matches('/'),
        ticker,
        vs_currency,
        from,
        to
    )
}

/// Fetches daily bars for `ticker` over `range`, serving from the disk cache
/// when a response for the same `(ticker, range)` is already stored.
pub fn fetch_market_data(
    ticker: &str,
    range: DateRange,
    endpoint: &str,
    config: &FetchConfig,
    transport: &dyn Transport,
) -> Result<AssetSeries, IngestError> {
    if range.is_empty() {
        return Ok(AssetSeries::empty(ticker));
    }
    let url = request_url(endpoint, ticker, range, &config.vs_currency);
    let cache = config.cache_path(ticker, range);
    if let Ok(body) = fs::read_to_string(&cache) {
        return parse_market_chart(&body, ticker, range, &url);
    }
    let body = get_with_retry(&url, config, transport)?;
    let series = parse_market_chart(&body, ticker, range, &url)?;
    // only well-formed responses are cached
    store(&cache, &body)?;
    Ok(series)
}

fn store(path: &Path, body: &str) -> Result<(), IngestError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| IngestError::io(dir, e))?;
    }
    fs::write(path, body).map_err(|e| IngestError::io(path, e))
}

fn get_with_retry(
    url: &str,
    config: &FetchConfig,
    transport: &dyn Transport,
) -> Result<String, IngestError> {
    let mut attempt = 0;
    loop {
        let failure = match transport.get(url) {
            Ok(r) if (200..300).contains(&r.status) => return Ok(r.body),
            Ok(r) if r.status == 429 || r.status >= 500 => format!("HTTP {}", r.status),
            Ok(r) => {
                return Err(IngestError::Http {
                    url: url.into(),
                    message: format!("HTTP {}", r.status),
                })
            }
            Err(e) => e,
        };
        if attempt >= config.max_retries {
            return Err(IngestError::Http {
                url: url.into(),
                message: format!("{failure} after {} attempts", attempt + 1),
            });
        }
        std::thread::sleep(config.delay(attempt));
        attempt += 1;
    }
}

#[derive(Deserialize)]
struct MarketChart {
    prices: Vec<Vec<f64>>,
    market_caps: Vec<Vec<f64>>,
    total_volumes: Vec<Vec<f64>>,
}

fn by_day(
    points: &[Vec<f64>],
    what: &str,
    url: &str,
) -> Result<BTreeMap<NaiveDate, f64>, IngestError> {
    let mut out = BTreeMap::new();
    for p in points {
        let [ts, v] = p.as_slice() else {
            return Err(IngestError::Schema {
                url: url.into(),
                message: format!("{what}: expected [timestamp, value] pairs"),
            });
        };
        let date = DateTime::from_timestamp_millis(*ts as i64)
            .ok_or_else(|| IngestError::Schema {
                url: url.into(),
                message: format!("{what}: bad timestamp {ts}"),
            })?
            .date_naive();
        // last observation of the day wins
        out.insert(date, *v);
    }
    Ok(out)
}

pub fn parse_market_chart(
    body: &str,
    ticker: &str,
    range: DateRange,
    url: &str,
) -> Result<AssetSeries, IngestError> {
    let chart: MarketChart = serde_json::from_str(body).map_err(|e| IngestError::Schema {
        url: url.into(),
        message: e.to_string(),
    })?;
    let prices = by_day(&chart.prices, "prices", url)?;
    let caps = by_day(&chart.market_caps, "market_caps", url)?;
    let vols = by_day(&chart.total_volumes, "total_volumes", url)?;
    let mut bars = Vec::new();
    for (&date, &price) in prices.iter().filter(|(d, _)| range.contains(**d)) {
        let (Some(&market_cap), Some(&volume)) = (caps.get(&date), vols.get(&date)) else {
            continue;
        };
        bars.push(DailyBar {
            date,
            price,
            market_cap,
            volume,
        });
    }
    AssetSeries::new(ticker, bars).map_err(|e| IngestError::Schema {
        url: url.into(),
        message: e.to_string(),
    })
}

/// [`Transport`] over a blocking `reqwest` client.
#[cfg(feature = "http")]
pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

#[cfg(feature = "http")]
impl ReqwestTransport {
    pub fn new() -> Result<Self, String> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(30))
            .user_agent(concat!("eventstudy/", env!("CARGO_PKG_VERSION")))
            .build()
            .map_err(|e| e.to_string())?;
        Ok(Self { client })
    }
}

#[cfg(feature = "http")]
impl Transport for ReqwestTransport {
    fn get(&self, url: &str) -> Result<HttpResponse, String> {
        let resp = self.client.get(url).send().map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| e.to_string())?;
        Ok(HttpResponse { status, body })
    }
}
