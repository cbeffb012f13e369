//! Seeded synthetic data with known ground truth, used by the bundled
//! fixture, the examples and the validation suite.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{self, BufWriter};
use std::path::Path;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::ingest::{
    write_asset_csv, write_events_csv, write_sentiment_csv, AssetSeries, DailyBar, EventRecord,
    Panel, SentimentIndex, SentimentPoint,
};
use crate::market_model::{abnormal_series, AbnormalSeries, Channel, ModelOptions, RelativeSeries};
use crate::metrics::CovariateRow;
use crate::window::{offset, RelWindow};

fn normal(mean: f64, sd: f64) -> Normal<f64> {
    Normal::new(mean, sd).expect("finite parameters")
}

/// Panel of events whose asset follows a market model with Gaussian noise
/// plus a known abnormal shift on chosen relative days.
#[derive(Clone, Debug, PartialEq)]
pub struct ShockPanel {
    pub n_events: usize,
    pub channel: Channel,
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
    pub benchmark_mean: f64,
    pub benchmark_sigma: f64,
    /// Mean abnormal shift per relative day.
    pub shifts: Vec<(i32, f64)>,
    /// Cross-event standard deviation of every shift.
    pub shift_sd: f64,
}

impl Default for ShockPanel {
    fn default() -> Self {
        Self {
            n_events: 48,
            channel: Channel::Returns,
            alpha: 0.001,
            beta: 1.2,
            sigma: 0.01,
            benchmark_mean: 0.0,
            benchmark_sigma: 0.03,
            shifts: vec![(0, -0.05)],
            shift_sd: 0.0,
        }
    }
}

impl ShockPanel {
    pub fn shift(&self, day: i32) -> f64 {
        self.shifts.iter().filter(|(d, _)| *d == day).map(|(_, s)| s).sum()
    }

    /// Population mean of the running abnormal sum from `span.start`.
    pub fn true_cumulative(&self, span: RelWindow) -> Vec<f64> {
        span.days()
            .scan(0.0, |acc, d| {
                *acc += self.shift(d);
                Some(*acc)
            })
            .collect()
    }

    /// Raw asset and benchmark series for each event, ids starting at 1.
    pub fn generate_inputs(&self, seed: u64) -> Vec<(RelativeSeries, RelativeSeries)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bench = normal(self.benchmark_mean, self.benchmark_sigma);
        let noise = normal(0.0, self.sigma);
        let spread = normal(0.0, self.shift_sd.max(f64::MIN_POSITIVE));
        let span = RelWindow::SPAN;
        (0..self.n_events)
            .map(|_| {
                let b: Vec<f64> = span.days().map(|_| bench.sample(&mut rng)).collect();
                let a: Vec<f64> = span
                    .days()
                    .zip(&b)
                    .map(|(d, x)| {
                        let mut shock = self.shift(d);
                        if shock != 0.0 && self.shift_sd > 0.0 {
                            shock += spread.sample(&mut rng);
                        }
                        self.alpha + self.beta * x + noise.sample(&mut rng) + shock
                    })
                    .collect();
                let at = |v: &Vec<f64>, d: i32| Some(v[(d - span.start) as usize]);
                (
                    RelativeSeries::from_fn(span, |d| at(&a, d)),
                    RelativeSeries::from_fn(span, |d| at(&b, d)),
                )
            })
            .collect()
    }

    /// Market-model abnormal series over the default estimation window and
    /// `horizon`.
    pub fn generate(&self, seed: u64, horizon: RelWindow) -> Vec<AbnormalSeries> {
        self.generate_inputs(seed)
            .iter()
            .enumerate()
            .map(|(i, (a, b))| {
                let id = i as u32 + 1;
                abnormal_series(id, &format!("S{id:02}"), a, b, self.channel, &ModelOptions::default(), horizon)
                    .expect("synthetic series cover the span")
            })
            .collect()
    }
}

/// Cross-section whose reactions depend on covariates through known slopes:
/// day-0 AR on volatility and the day 1-2 ARs on illiquidity, so CAR[0,2]
/// loads on both.
#[derive(Clone, Debug, PartialEq)]
pub struct DeterminantsSpec {
    pub n_events: usize,
    pub day0_intercept: f64,
    pub beta_volatility: f64,
    pub beta_illiquidity: f64,
    pub sigma: f64,
}

impl Default for DeterminantsSpec {
    fn default() -> Self {
        Self {
            n_events: 48,
            day0_intercept: -0.02,
            beta_volatility: -0.8,
            beta_illiquidity: -1.5,
            sigma: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CrossSectionSample {
    pub covariates: Vec<CovariateRow>,
    pub returns: Vec<AbnormalSeries>,
    pub volumes: Vec<AbnormalSeries>,
}

fn clipped(rng: &mut ChaCha8Rng, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    normal(mean, sd).sample(rng).clamp(lo, hi)
}

/// Covariates drawn to resemble the cross-section of classified assets.
pub fn draw_covariates(rng: &mut ChaCha8Rng, event_id: u32) -> CovariateRow {
    CovariateRow {
        event_id,
        ticker: format!("S{event_id:02}"),
        size: clipped(rng, 19.05, 2.89, 11.96, 24.60),
        age_days: clipped(rng, 1345.0, 658.0, 245.0, 3349.0).round() as i64,
        volatility: clipped(rng, 0.061, 0.030, 0.002, 0.157),
        illiquidity: clipped(rng, -0.057, 1.441, -7.656, 6.223),
        sentiment: clipped(rng, 51.44, 14.77, 22.0, 88.0).round(),
        sentiment_lag_days: 0,
    }
}

impl DeterminantsSpec {
    pub fn generate(&self, seed: u64) -> CrossSectionSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let covariates: Vec<CovariateRow> =
            (1..=self.n_events as u32).map(|id| draw_covariates(&mut rng, id)).collect();
        let mut returns = Vec::with_capacity(self.n_events);
        let mut volumes = Vec::with_capacity(self.n_events);
        for row in &covariates {
            let half = 0.5 * self.beta_illiquidity * row.illiquidity;
            let ret = ShockPanel {
                n_events: 1,
                sigma: self.sigma,
                shifts: vec![
                    (0, self.day0_intercept + self.beta_volatility * row.volatility),
                    (1, half),
                    (2, half),
                ],
                ..ShockPanel::default()
            };
            let vol = ShockPanel {
                n_events: 1,
                channel: Channel::Volumes,
                alpha: 2.0,
                beta: 0.9,
                sigma: 0.3,
                benchmark_mean: 23.5,
                benchmark_sigma: 0.2,
                shifts: vec![(0, 0.6), (1, 0.3), (2, 0.1)],
                shift_sd: 0.0,
            };
            let seed = rng.random::<u64>();
            for (spec, out) in [(ret, &mut returns), (vol, &mut volumes)] {
                let mut s = spec.generate(seed, RelWindow::HORIZON).remove(0);
                s.event_id = row.event_id;
                s.ticker = row.ticker.clone();
                out.push(s);
            }
        }
        CrossSectionSample {
            covariates,
            returns,
            volumes,
        }
    }
}

/// Parameters of a synthetic on-disk dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    pub seed: u64,
    pub n_events: usize,
    /// Event ids are assigned consecutively from here, so panel tags follow
    /// the canonical id grouping.
    pub first_event_id: u32,
    pub first_event_date: NaiveDate,
    pub event_spacing_days: i32,
    /// Listing ages are capped here to keep the files small.
    pub max_age_days: i64,
    /// Mean day-0 abnormal log return.
    pub day0_shift: f64,
    /// Mean abnormal log return on each of days 1..=6.
    pub drift_shift: f64,
    /// Event index (0-based) given zero-volume days in its estimation window.
    pub zero_volume_event: Option<usize>,
    pub zero_volume_days: usize,
    /// Event index whose date, and the day before, are missing from the
    /// sentiment index.
    pub sentiment_gap_event: Option<usize>,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            seed: 7,
            n_events: 48,
            first_event_id: 1,
            first_event_date: NaiveDate::from_ymd_opt(2022, 6, 1).expect("valid date"),
            event_spacing_days: 7,
            max_age_days: 600,
            day0_shift: -0.05,
            drift_shift: -0.005,
            zero_volume_event: Some(3),
            zero_volume_days: 4,
            sentiment_gap_event: Some(5),
        }
    }
}

/// A complete input set: registry, per-asset bars, benchmark and sentiment.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset {
    pub events: Vec<EventRecord>,
    pub assets: BTreeMap<String, AssetSeries>,
    pub benchmark: AssetSeries,
    pub sentiment: SentimentIndex,
}

pub const BENCHMARK_TICKER: &str = "BTC";

impl SyntheticDataset {
    pub fn generate(spec: &DatasetSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let last_event = offset(spec.first_event_date, spec.event_spacing_days * (spec.n_events as i32 - 1));
        let start = offset(spec.first_event_date, -(spec.max_age_days as i32) - 1);
        let end = offset(last_event, 45);
        let n_days = (end - start).num_days() as usize + 1;
        let dates: Vec<NaiveDate> = (0..n_days).map(|i| offset(start, i as i32)).collect();

        let btc_ret = normal(0.0005, 0.035);
        let btc_lv = normal(23.5, 0.2);
        let mut btc_r = vec![0.0; n_days];
        let mut btc_logvol = vec![0.0; n_days];
        let mut price = 9000.0f64;
        let mut btc_bars = Vec::with_capacity(n_days);
        for i in 0..n_days {
            if i > 0 {
                btc_r[i] = btc_ret.sample(&mut rng);
                price *= btc_r[i].exp();
            }
            btc_logvol[i] = btc_lv.sample(&mut rng);
            btc_bars.push(DailyBar {
                date: dates[i],
                price,
                market_cap: price * 19.0e6,
                volume: btc_logvol[i].exp(),
            });
        }
        let benchmark = AssetSeries::new(BENCHMARK_TICKER, btc_bars).expect("valid bars");

        let mut events = Vec::new();
        let mut assets = BTreeMap::new();
        for k in 0..spec.n_events {
            let event_id = spec.first_event_id + k as u32;
            let ticker = format!("SYN{:02}", k + 1);
            let date = offset(spec.first_event_date, spec.event_spacing_days * k as i32);
            let mut row = draw_covariates(&mut rng, event_id);
            row.age_days = row.age_days.min(spec.max_age_days);
            let listed = offset(date, -(row.age_days as i32));
            let sigma = row.volatility.max(0.01);
            let beta = rng.random_range(0.6..1.6);
            let alpha = rng.random_range(-0.002..0.002);
            let eps = normal(0.0, sigma);
            let lv_noise = normal(0.0, 0.25);
            let lv_level = rng.random_range(14.0..20.0);
            let supply = (row.size - 2.0).exp();
            let shock_spread = normal(0.0, 0.02);

            let mut p = rng.random_range(0.05..50.0);
            let mut bars = Vec::new();
            for (i, &d) in dates.iter().enumerate() {
                if d < listed || d > offset(date, 45) {
                    continue;
                }
                let rel = (d - date).num_days() as i32;
                if d > listed {
                    let mut r = alpha + beta * btc_r[i] + eps.sample(&mut rng);
                    if rel == 0 {
                        r += spec.day0_shift + shock_spread.sample(&mut rng);
                    } else if (1..=6).contains(&rel) {
                        r += spec.drift_shift;
                    }
                    p *= r.exp();
                }
                let spike = match rel {
                    0 => 0.6,
                    1 => 0.3,
                    2 => 0.1,
                    _ => 0.0,
                };
                let mut volume =
                    (lv_level + 0.8 * (btc_logvol[i] - 23.5) + lv_noise.sample(&mut rng) + spike).exp();
                if spec.zero_volume_event == Some(k) && (-120..-120 + spec.zero_volume_days as i32).contains(&rel) {
                    volume = 0.0;
                }
                bars.push(DailyBar {
                    date: d,
                    price: p,
                    market_cap: p * supply,
                    volume,
                });
            }
            assets.insert(ticker.clone(), AssetSeries::new(ticker.clone(), bars).expect("valid bars"));
            events.push(EventRecord {
                serial: k as u32 + 1,
                event_id: Some(event_id),
                date,
                ticker,
                name: format!("Synthetic asset {}", k + 1),
                panels: Panel::canonical_for(event_id),
                reference: "synthetic".into(),
            });
        }

        let gap: BTreeSet<NaiveDate> = spec
            .sentiment_gap_event
            .filter(|k| *k < events.len())
            .map(|k| [events[k].date, offset(events[k].date, -1)].into_iter().collect())
            .unwrap_or_default();
        let mut level: f64 = 50.0;
        let step = normal(0.0, 4.0);
        let mut points = Vec::new();
        for &d in &dates {
            level = (level + 0.1 * (51.0 - level) + step.sample(&mut rng)).clamp(5.0, 95.0);
            if !gap.contains(&d) {
                points.push(SentimentPoint {
                    date: d,
                    value: level.round(),
                });
            }
        }

        Self {
            events,
            assets,
            benchmark,
            sentiment: SentimentIndex::from_points(points),
        }
    }

    /// Writes `events.csv`, `sentiment.csv` and `data/<TICKER>.csv` under
    /// `dir`.
    pub fn write(&self, dir: &Path) -> io::Result<()> {
        let data = dir.join("data");
        fs::create_dir_all(&data)?;
        write_events_csv(&self.events, BufWriter::new(File::create(dir.join("events.csv"))?))?;
        write_sentiment_csv(&self.sentiment, BufWriter::new(File::create(dir.join("sentiment.csv"))?))?;
        for s in self.assets.values().chain([&self.benchmark]) {
            write_asset_csv(s, BufWriter::new(File::create(data.join(format!("{}.csv", s.ticker)))?))?;
        }
        Ok(())
    }
}

/// Smooth mean-reverting 0-100 index covering `start..=end`.
pub fn sentiment_series(seed: u64, start: NaiveDate, end: NaiveDate) -> SentimentIndex {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = normal(0.0, 4.0);
    let mut level: f64 = 50.0;
    let days = (end - start).num_days().max(-1) + 1;
    SentimentIndex::from_points((0..days).map(|i| {
        level = (level + 0.1 * (51.0 - level) + step.sample(&mut rng)).clamp(5.0, 95.0);
        SentimentPoint {
            date: offset(start, i as i32),
            value: level.round(),
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn true_cumulative_path() {
        let p = ShockPanel {
            shifts: vec![(0, -0.05), (2, 0.01)],
            ..ShockPanel::default()
        };
        assert_eq!(p.true_cumulative(RelWindow::new(-1, 3)), vec![0.0, -0.05, -0.05, -0.04, -0.04]);
    }

    #[test]
    fn dataset_is_reproducible() {
        let spec = DatasetSpec {
            n_events: 3,
            ..DatasetSpec::default()
        };
        assert_eq!(SyntheticDataset::generate(&spec), SyntheticDataset::generate(&spec));
    }

    #[test]
    fn zero_volume_days_planted() {
        let ds = SyntheticDataset::generate(&DatasetSpec::default());
        let counts: Vec<usize> = ds.assets.values().map(|a| a.zero_volume_days().len()).collect();
        assert_eq!(counts.iter().sum::<usize>(), 4);
    }

    #[test]
    fn sentiment_gap_needs_fallback() {
        let ds = SyntheticDataset::generate(&DatasetSpec::default());
        let date = ds.events[5].date;
        assert_eq!(ds.sentiment.lookup(date).unwrap().lag_days, 2);
        assert_eq!(ds.sentiment.lookup(ds.events[4].date).unwrap().lag_days, 0);
    }
}
