//! Loading asset series, the event registry and the sentiment index.
//!
//! Asset and sentiment files use ISO-8601 dates; the event registry uses
//! `dd/mm/yyyy` (ISO is also accepted). Everything is normalized to
//! [`NaiveDate`] in UTC calendar days. Missing days are recorded, never filled.

pub mod fetch;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::window::{days_between, offset, DateRange, RelWindow};

pub use fetch::{fetch_market_data, FetchConfig, HttpResponse, Transport};

pub const ASSET_HEADER: [&str; 4] = ["date", "price", "market_cap", "volume"];
pub const EVENTS_HEADER: [&str; 7] = [
    "serial", "event_id", "date", "ticker", "name", "panels", "reference",
];
pub const SENTIMENT_HEADER: [&str; 2] = ["date", "value"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: header must be `{expected}`, found `{found}`")]
    Header {
        path: String,
        expected: String,
        found: String,
    },
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: String,
        line: u64,
        message: String,
    },
    #[error("{path}:{line}: non-positive price {price} on {date}")]
    NonPositivePrice {
        path: String,
        line: u64,
        date: NaiveDate,
        price: f64,
    },
    #[error("{path}:{line}: duplicate date {date}")]
    DuplicateDate {
        path: String,
        line: u64,
        date: NaiveDate,
    },
    #[error("{path}:{line}: unknown panel tag `{tag}`")]
    UnknownPanel { path: String, line: u64, tag: String },
    #[error("{path}:{line}: unparsable date `{text}`")]
    BadDate { path: String, line: u64, text: String },
    #[error("{path}:{line}: sentiment value {value} outside [0, 100]")]
    SentimentRange { path: String, line: u64, value: f64 },
    #[error("fetch {url}: {message}")]
    Http { url: String, message: String },
    #[error("fetch {url}: unexpected response schema: {message}")]
    Schema { url: String, message: String },
}

impl IngestError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        IngestError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// One day of market data for one asset. All amounts in quote currency.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DailyBar {
    pub date: NaiveDate,
    pub price: f64,
    pub market_cap: f64,
    pub volume: f64,
}

/// Date-sorted daily bars for one asset, at most one per calendar day.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssetSeries {
    pub ticker: String,
    bars: Vec<DailyBar>,
}

impl AssetSeries {
    /// Builds a series from bars in any order; rejects duplicates and bad values.
    pub fn new(ticker: impl Into<String>, mut bars: Vec<DailyBar>) -> Result<Self, IngestError> {
        let ticker = ticker.into();
        for b in &bars {
            check_bar(b).map_err(|message| IngestError::Malformed {
                path: ticker.clone(),
                line: 0,
                message,
            })?;
        }
        bars.sort_by_key(|b| b.date);
        if let Some(w) = bars.windows(2).find(|w| w[0].date == w[1].date) {
            return Err(IngestError::DuplicateDate {
                path: ticker,
                line: 0,
                date: w[0].date,
            });
        }
        Ok(Self { ticker, bars })
    }

    pub fn empty(ticker: impl Into<String>) -> Self {
        Self {
            ticker: ticker.into(),
            bars: Vec::new(),
        }
    }

    pub fn bars(&self) -> &[DailyBar] {
        &self.bars
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    pub fn first_date(&self) -> Option<NaiveDate> {
        self.bars.first().map(|b| b.date)
    }

    pub fn last_date(&self) -> Option<NaiveDate> {
        self.bars.last().map(|b| b.date)
    }

    pub fn get(&self, date: NaiveDate) -> Option<&DailyBar> {
        self.bars
            .binary_search_by_key(&date, |b| b.date)
            .ok()
            .map(|i| &self.bars[i])
    }

    /// Calendar days between the first and last bar that have no bar.
    pub fn gaps(&self) -> Vec<NaiveDate> {
        let mut out = Vec::new();
        for w in self.bars.windows(2) {
            let mut d = offset(w[0].date, 1);
            while d < w[1].date {
                out.push(d);
                d = offset(d, 1);
            }
        }
        out
    }

    /// Whether the series has its first bar on or before `event + window.start`
    /// and its last bar on or after `event + window.end`.
    pub fn spans(&self, event_date: NaiveDate, window: RelWindow) -> bool {
        let r = window.to_dates(event_date);
        matches!((self.first_date(), self.last_date()), (Some(a), Some(b)) if a <= r.start && b >= r.end)
    }

    /// Days with zero traded volume.
    pub fn zero_volume_days(&self) -> Vec<NaiveDate> {
        self.bars
            .iter()
            .filter(|b| b.volume == 0.0)
            .map(|b| b.date)
            .collect()
    }

    pub fn restrict(&self, range: DateRange) -> AssetSeries {
        AssetSeries {
            ticker: self.ticker.clone(),
            bars: self
                .bars
                .iter()
                .filter(|b| range.contains(b.date))
                .copied()
                .collect(),
        }
    }
}

fn check_bar(b: &DailyBar) -> Result<(), String> {
    if !(b.price.is_finite() && b.price > 0.0) {
        return Err(format!("non-positive price {} on {}", b.price, b.date));
    }
    if !(b.market_cap.is_finite() && b.market_cap >= 0.0) {
        return Err(format!("negative market cap {} on {}", b.market_cap, b.date));
    }
    if !(b.volume.is_finite() && b.volume >= 0.0) {
        return Err(format!("negative volume {} on {}", b.volume, b.date));
    }
    Ok(())
}

fn read_all(path: &Path) -> Result<String, IngestError> {
    let mut s = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut s))
        .map_err(|e| IngestError::io(path, e))?;
    Ok(s)
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes())
}

fn check_header(
    rdr: &mut csv::Reader<&[u8]>,
    expected: &[&str],
    path: &str,
) -> Result<(), IngestError> {
    let found = rdr
        .headers()
        .map_err(|e| IngestError::Malformed {
            path: path.into(),
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if found.iter().ne(expected.iter().copied()) {
        return Err(IngestError::Header {
            path: path.into(),
            expected: expected.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        });
    }
    Ok(())
}

fn records<'a>(
    rdr: &'a mut csv::Reader<&'a [u8]>,
    path: &'a str,
) -> impl Iterator<Item = Result<(u64, csv::StringRecord), IngestError>> + 'a {
    rdr.records().map(move |r| {
        let rec = r.map_err(|e| IngestError::Malformed {
            path: path.into(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        Ok((line, rec))
    })
}

fn parse_iso(text: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(text, "%Y-%m-%d").ok()
}

/// Parses `dd/mm/yyyy`, falling back to ISO-8601.
pub fn parse_registry_date(text: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(text, "%d/%m/%Y")
        .ok()
        .or_else(|| parse_iso(text))
}

fn parse_num(text: &str, what: &str, path: &str, line: u64) -> Result<f64, IngestError> {
    text.parse::<f64>().map_err(|_| IngestError::Malformed {
        path: path.into(),
        line,
        message: format!("cannot parse {what} `{text}`"),
    })
}

/// Loads an asset CSV with header `date,price,market_cap,volume`.
pub fn load_asset_csv(path: impl AsRef<Path>, ticker: &str) -> Result<AssetSeries, IngestError> {
    let path = path.as_ref();
    let text = read_all(path)?;
    parse_asset_csv(&text, ticker, &path.display().to_string())
}

pub fn parse_asset_csv(text: &str, ticker: &str, path: &str) -> Result<AssetSeries, IngestError> {
    let mut rdr = reader(text);
    check_header(&mut rdr, &ASSET_HEADER, path)?;
    let mut seen: HashMap<NaiveDate, u64> = HashMap::new();
    let mut bars = Vec::new();
    for item in records(&mut rdr, path) {
        let (line, rec) = item?;
        if rec.len() != ASSET_HEADER.len() {
            return Err(IngestError::Malformed {
                path: path.into(),
                line,
                message: format!("expected 4 fields, found {}", rec.len()),
            });
        }
        let date = parse_iso(&rec[0]).ok_or_else(|| IngestError::BadDate {
            path: path.into(),
            line,
            text: rec[0].to_string(),
        })?;
        let price = parse_num(&rec[1], "price", path, line)?;
        let market_cap = parse_num(&rec[2], "market_cap", path, line)?;
        let volume = parse_num(&rec[3], "volume", path, line)?;
        if !(price > 0.0) || !price.is_finite() {
            return Err(IngestError::NonPositivePrice {
                path: path.into(),
                line,
                date,
                price,
            });
        }
        let bar = DailyBar {
            date,
            price,
            market_cap,
            volume,
        };
        check_bar(&bar).map_err(|message| IngestError::Malformed {
            path: path.into(),
            line,
            message,
        })?;
        if seen.insert(date, line).is_some() {
            return Err(IngestError::DuplicateDate {
                path: path.into(),
                line,
                date,
            });
        }
        bars.push(bar);
    }
    bars.sort_by_key(|b| b.date);
    Ok(AssetSeries {
        ticker: ticker.to_string(),
        bars,
    })
}

/// Writes `series` in the asset CSV schema. Floats use the shortest
/// representation that parses back to the same bits.
pub fn write_asset_csv<W: Write>(series: &AssetSeries, out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ASSET_HEADER)?;
    for b in &series.bars {
        w.write_record([
            b.date.to_string(),
            b.price.to_string(),
            b.market_cap.to_string(),
            b.volume.to_string(),
        ])?;
    }
    w.flush()
}

/// Event sub-samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Panel {
    All,
    BinanceCoinbase,
    CoinbaseInsider,
    Bittrex,
}

impl Panel {
    pub const ALL_PANELS: [Panel; 4] = [
        Panel::All,
        Panel::BinanceCoinbase,
        Panel::CoinbaseInsider,
        Panel::Bittrex,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            Panel::All => "ALL",
            Panel::BinanceCoinbase => "BINANCE_COINBASE",
            Panel::CoinbaseInsider => "COINBASE_INSIDER",
            Panel::Bittrex => "BITTREX",
        }
    }

    /// Single-letter label used in rendered tables.
    pub fn letter(&self) -> char {
        match self {
            Panel::All => 'a',
            Panel::BinanceCoinbase => 'b',
            Panel::CoinbaseInsider => 'c',
            Panel::Bittrex => 'd',
        }
    }

    pub fn title(&self) -> &'static str {
        match self {
            Panel::All => "All events",
            Panel::BinanceCoinbase => "Binance and Coinbase",
            Panel::CoinbaseInsider => "Coinbase Insider Trading",
            Panel::Bittrex => "Bittrex Enforcement",
        }
    }

    /// Event-id range of the panel in the shipped registry.
    pub fn id_range(&self) -> (u32, u32) {
        match self {
            Panel::All => (1, 48),
            Panel::BinanceCoinbase => (32, 47),
            Panel::CoinbaseInsider => (5, 13),
            Panel::Bittrex => (26, 31),
        }
    }

    /// Panels an event id belongs to under the registry's grouping.
    pub fn canonical_for(event_id: u32) -> BTreeSet<Panel> {
        Panel::ALL_PANELS
            .iter()
            .filter(|p| {
                let (lo, hi) = p.id_range();
                (lo..=hi).contains(&event_id)
            })
            .copied()
            .collect()
    }
}

impl fmt::Display for Panel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Panel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Panel::ALL_PANELS
            .iter()
            .find(|p| p.tag() == s)
            .copied()
            .ok_or_else(|| s.to_string())
    }
}

/// One asset named in one classification event.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub serial: u32,
    /// Present only for events that meet the inclusion criteria.
    pub event_id: Option<u32>,
    pub date: NaiveDate,
    pub ticker: String,
    pub name: String,
    pub panels: BTreeSet<Panel>,
    pub reference: String,
}

impl EventRecord {
    pub fn in_panel(&self, panel: Panel) -> bool {
        self.event_id.is_some() && self.panels.contains(&panel)
    }
}

/// Loads the event registry. Rows with an event id but an empty panel list
/// get the canonical panels for that id.
pub fn load_events_csv(path: impl AsRef<Path>) -> Result<Vec<EventRecord>, IngestError> {
    let path = path.as_ref();
    let text = read_all(path)?;
    parse_events_csv(&text, &path.display().to_string())
}

pub fn parse_events_csv(text: &str, path: &str) -> Result<Vec<EventRecord>, IngestError> {
    let mut rdr = reader(text);
    check_header(&mut rdr, &EVENTS_HEADER, path)?;
    let mut out = Vec::new();
    for item in records(&mut rdr, path) {
        let (line, rec) = item?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        if rec.len() < 5 || rec.len() > EVENTS_HEADER.len() {
            return Err(IngestError::Malformed {
                path: path.into(),
                line,
                message: format!("expected 5 to 7 fields, found {}", rec.len()),
            });
        }
        let serial = field(0).parse::<u32>().map_err(|_| IngestError::Malformed {
            path: path.into(),
            line,
            message: format!("cannot parse serial `{}`", field(0)),
        })?;
        let event_id = match field(1) {
            "" => None,
            s => Some(s.parse::<u32>().map_err(|_| IngestError::Malformed {
                path: path.into(),
                line,
                message: format!("cannot parse event_id `{s}`"),
            })?),
        };
        let date = parse_registry_date(field(2)).ok_or_else(|| IngestError::BadDate {
            path: path.into(),
            line,
            text: field(2).to_string(),
        })?;
        let mut panels = BTreeSet::new();
        for tag in field(5).split('|').map(str::trim).filter(|t| !t.is_empty()) {
            let p = tag.parse::<Panel>().map_err(|tag| IngestError::UnknownPanel {
                path: path.into(),
                line,
                tag,
            })?;
            panels.insert(p);
        }
        if panels.is_empty() {
            if let Some(id) = event_id {
                panels = Panel::canonical_for(id);
            }
        }
        out.push(EventRecord {
            serial,
            event_id,
            date,
            ticker: field(3).to_string(),
            name: field(4).to_string(),
            panels,
            reference: field(6).to_string(),
        });
    }
    Ok(out)
}

/// Events whose panel tags disagree with the canonical id grouping, as
/// `(event_id, tagged, canonical)`.
pub fn panel_mismatches(events: &[EventRecord]) -> Vec<(u32, BTreeSet<Panel>, BTreeSet<Panel>)> {
    events
        .iter()
        .filter_map(|e| {
            let id = e.event_id?;
            let canon = Panel::canonical_for(id);
            (canon != e.panels).then(|| (id, e.panels.clone(), canon))
        })
        .collect()
}

/// Event ids per panel, sorted.
pub fn panel_members(events: &[EventRecord], panel: Panel) -> Vec<u32> {
    let mut ids: Vec<u32> = events
        .iter()
        .filter(|e| e.in_panel(panel))
        .filter_map(|e| e.event_id)
        .collect();
    ids.sort_unstable();
    ids
}

/// Writes a registry in the events CSV schema with ISO dates.
pub fn write_events_csv<W: Write>(events: &[EventRecord], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(EVENTS_HEADER)?;
    for e in events {
        let panels: Vec<&str> = e.panels.iter().map(|p| p.tag()).collect();
        w.write_record([
            e.serial.to_string(),
            e.event_id.map(|id| id.to_string()).unwrap_or_default(),
            e.date.to_string(),
            e.ticker.clone(),
            e.name.clone(),
            panels.join("|"),
            e.reference.clone(),
        ])?;
    }
    w.flush()
}

pub fn write_sentiment_csv<W: Write>(index: &SentimentIndex, out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SENTIMENT_HEADER)?;
    for p in index.iter() {
        w.write_record([p.date.to_string(), p.value.to_string()])?;
    }
    w.flush()
}

/// One daily reading of the sentiment index.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SentimentPoint {
    pub date: NaiveDate,
    pub value: f64,
}

/// Result of a sentiment lookup.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SentimentLookup {
    pub point: SentimentPoint,
    /// Days between the requested date and the point used; 0 on exact match.
    pub lag_days: i64,
}

impl SentimentLookup {
    pub fn is_fallback(&self) -> bool {
        self.lag_days > 0
    }
}

/// Daily sentiment index keyed by date.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SentimentIndex {
    points: BTreeMap<NaiveDate, SentimentPoint>,
}

impl SentimentIndex {
    /// Largest gap tolerated when falling back to an earlier reading.
    pub const MAX_FALLBACK_DAYS: i64 = 3;

    pub fn from_points(points: impl IntoIterator<Item = SentimentPoint>) -> Self {
        Self {
            points: points.into_iter().map(|p| (p.date, p)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn get(&self, date: NaiveDate) -> Option<&SentimentPoint> {
        self.points.get(&date)
    }

    /// Exact-date match, else the most recent earlier reading within
    /// [`Self::MAX_FALLBACK_DAYS`].
    pub fn lookup(&self, date: NaiveDate) -> Option<SentimentLookup> {
        let (_, p) = self.points.range(..=date).next_back()?;
        let lag_days = days_between(p.date, date);
        (lag_days <= Self::MAX_FALLBACK_DAYS).then_some(SentimentLookup {
            point: *p,
            lag_days,
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = &SentimentPoint> {
        self.points.values()
    }
}

pub fn load_sentiment_csv(path: impl AsRef<Path>) -> Result<SentimentIndex, IngestError> {
    let path = path.as_ref();
    let text = read_all(path)?;
    parse_sentiment_csv(&text, &path.display().to_string())
}

pub fn parse_sentiment_csv(text: &str, path: &str) -> Result<SentimentIndex, IngestError> {
    let mut rdr = reader(text);
    check_header(&mut rdr, &SENTIMENT_HEADER, path)?;
    let mut points = BTreeMap::new();
    for item in records(&mut rdr, path) {
        let (line, rec) = item?;
        if rec.len() != 2 {
            return Err(IngestError::Malformed {
                path: path.into(),
                line,
                message: format!("expected 2 fields, found {}", rec.len()),
            });
        }
        let date = parse_iso(&rec[0]).ok_or_else(|| IngestError::BadDate {
            path: path.into(),
            line,
            text: rec[0].to_string(),
        })?;
        let value = parse_num(&rec[1], "value", path, line)?;
        if !(0.0..=100.0).contains(&value) {
            return Err(IngestError::SentimentRange {
                path: path.into(),
                line,
                value,
            });
        }
        if points.insert(date, SentimentPoint { date, value }).is_some() {
            return Err(IngestError::DuplicateDate {
                path: path.into(),
                line,
                date,
            });
        }
    }
    Ok(SentimentIndex { points })
}
