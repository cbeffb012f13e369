//! Cross-sectional analysis of event reactions: robust regressions of window
//! CARs/CAVs on asset characteristics, descriptive statistics and
//! correlations.

pub mod robust;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event_study::{EventStudyError, EventValue, PanelResult};
use crate::inference::student_t_p;
use crate::market_model::Channel;
use crate::metrics::CovariateRow;
use crate::window::RelWindow;

pub use robust::{mm_regression, RobustConfig, RobustError, RobustFit};

pub const MIN_ROWS: usize = 10;

pub const COLUMNS: [&str; 6] = ["constant", "size", "age", "volatility", "illiquidity", "sentiment"];

/// Periods of the determinant regressions.
pub const REGRESSION_WINDOWS: [RelWindow; 6] = [
    RelWindow::new(-7, -1),
    RelWindow::new(0, 0),
    RelWindow::new(0, 2),
    RelWindow::new(0, 6),
    RelWindow::new(0, 13),
    RelWindow::new(0, 30),
];

#[derive(Debug, Error, PartialEq)]
pub enum CrossSectionError {
    #[error("need at least {need} complete rows, have {have}")]
    TooFewRows { need: usize, have: usize },
    #[error("event {event_id}: non-finite {column}")]
    MissingCovariate { event_id: u32, column: &'static str },
    #[error("design matrix is rank deficient: `{first}` and `{second}` are collinear")]
    RankDeficient { first: String, second: String },
    #[error(transparent)]
    Robust(#[from] RobustError),
    #[error(transparent)]
    EventStudy(#[from] EventStudyError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScalingPolicy {
    /// Age in days is divided by this before entering the design.
    pub age_divisor: f64,
    /// Standardize illiquidity cross-sectionally (z-score) before use.
    pub standardize_illiquidity: bool,
}

impl Default for ScalingPolicy {
    fn default() -> Self {
        Self {
            age_divisor: 100.0,
            standardize_illiquidity: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DesignMatrix {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    /// Row order, ascending.
    pub event_ids: Vec<u32>,
    pub columns: Vec<String>,
}

/// Joins covariates with `response` by event id and assembles
/// `[1, size, age / divisor, volatility, illiquidity, sentiment]`.
/// Rows are ordered by event id whatever the input order.
pub fn design_matrix(
    rows: &[CovariateRow],
    response: &[EventValue],
    policy: &ScalingPolicy,
) -> Result<DesignMatrix, CrossSectionError> {
    let by_id: BTreeMap<u32, &CovariateRow> = rows.iter().map(|r| (r.event_id, r)).collect();
    let resp: BTreeMap<u32, f64> = response.iter().map(|v| (v.event_id, v.value)).collect();
    let joined: Vec<(&CovariateRow, f64)> = by_id
        .iter()
        .filter_map(|(id, row)| resp.get(id).map(|v| (*row, *v)))
        .collect();
    if joined.len() < MIN_ROWS {
        return Err(CrossSectionError::TooFewRows {
            need: MIN_ROWS,
            have: joined.len(),
        });
    }
    let mut illiq: Vec<f64> = joined.iter().map(|(r, _)| r.illiquidity).collect();
    if policy.standardize_illiquidity {
        standardize(&mut illiq);
    }
    let n = joined.len();
    let mut x = DMatrix::<f64>::zeros(n, COLUMNS.len());
    for (i, (row, _)) in joined.iter().enumerate() {
        let vals = [
            1.0,
            row.size,
            row.age_days as f64 / policy.age_divisor,
            row.volatility,
            illiq[i],
            row.sentiment,
        ];
        for (j, v) in vals.into_iter().enumerate() {
            if !v.is_finite() {
                return Err(CrossSectionError::MissingCovariate {
                    event_id: row.event_id,
                    column: COLUMNS[j],
                });
            }
            x[(i, j)] = v;
        }
    }
    let columns: Vec<String> = COLUMNS.iter().map(|s| s.to_string()).collect();
    check_rank(&x, &columns)?;
    Ok(DesignMatrix {
        x,
        y: DVector::from_iterator(n, joined.iter().map(|(_, v)| *v)),
        event_ids: joined.iter().map(|(r, _)| r.event_id).collect(),
        columns,
    })
}

fn standardize(values: &mut [f64]) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    for v in values.iter_mut() {
        *v = if sd > 0.0 { (*v - mean) / sd } else { 0.0 };
    }
}

/// Modified Gram-Schmidt over the columns. A column whose residual collapses
/// is reported together with the earlier column it is most aligned with.
pub fn check_rank(x: &DMatrix<f64>, names: &[String]) -> Result<(), CrossSectionError> {
    let p = x.ncols();
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(p);
    for j in 0..p {
        let col = x.column(j).into_owned();
        let norm = col.norm();
        let mut v = col.clone();
        for q in &basis {
            let proj = q.dot(&v);
            v -= q * proj;
        }
        if !(norm > 0.0) || v.norm() <= 1e-10 * norm {
            let partner = (0..j)
                .max_by(|&a, &b| {
                    cosine(&x.column(a).into_owned(), &col)
                        .total_cmp(&cosine(&x.column(b).into_owned(), &col))
                })
                .unwrap_or(j);
            return Err(CrossSectionError::RankDeficient {
                first: names[partner].clone(),
                second: names[j].clone(),
            });
        }
        basis.push(v.normalize());
    }
    Ok(())
}

fn cosine(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let d = a.norm() * b.norm();
    if d > 0.0 {
        (a.dot(b) / d).abs()
    } else {
        0.0
    }
}

/// One cell of the determinant grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionCell {
    /// 1-based column number; returns first, then volumes.
    pub index: usize,
    pub channel: Channel,
    pub period: RelWindow,
    pub dependent: String,
    pub fit: Option<RobustFit>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionGrid {
    pub columns: Vec<String>,
    pub cells: Vec<RegressionCell>,
}

fn dependent_label(channel: Channel, period: RelWindow) -> String {
    if period.len() == 1 {
        channel.day_label().into()
    } else {
        channel.window_label().into()
    }
}

/// Runs the six return and six volume regressions. Cells run in parallel;
/// each uses the same seed and a row order fixed by event id, so the grid does
/// not depend on input order or thread scheduling.
pub fn run_table4(
    returns: &PanelResult,
    volumes: &PanelResult,
    covariates: &[CovariateRow],
    policy: &ScalingPolicy,
    cfg: &RobustConfig,
) -> RegressionGrid {
    let jobs: Vec<(usize, &PanelResult, RelWindow)> = [returns, volumes]
        .into_iter()
        .flat_map(|panel| REGRESSION_WINDOWS.iter().map(move |w| (panel, *w)))
        .enumerate()
        .map(|(i, (panel, w))| (i + 1, panel, w))
        .collect();
    let cells = jobs
        .par_iter()
        .map(|&(index, panel, period)| {
            let outcome = panel
                .event_sums(period)
                .map_err(CrossSectionError::from)
                .and_then(|resp| design_matrix(covariates, &resp, policy))
                .and_then(|d| Ok(mm_regression(&d.x, &d.y, cfg)?));
            let (fit, error) = match outcome {
                Ok(f) => (Some(f), None),
                Err(e) => (None, Some(e.to_string())),
            };
            RegressionCell {
                index,
                channel: panel.channel,
                period,
                dependent: dependent_label(panel.channel, period),
                fit,
                error,
            }
        })
        .collect();
    RegressionGrid {
        columns: COLUMNS.iter().map(|s| s.to_string()).collect(),
        cells,
    }
}

/// Summary statistics of one variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Descriptive {
    pub variable: String,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; absent for a single row.
    pub sd: Option<f64>,
    /// Midpoint of the two middle values for even `n`.
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

pub const VARIABLES: [&str; 5] = ["Size", "Age", "Volatility", "Illiquidity", "Sentiment"];

fn variable_columns(rows: &[CovariateRow]) -> [Vec<f64>; 5] {
    [
        rows.iter().map(|r| r.size).collect(),
        rows.iter().map(|r| r.age_days as f64).collect(),
        rows.iter().map(|r| r.volatility).collect(),
        rows.iter().map(|r| r.illiquidity).collect(),
        rows.iter().map(|r| r.sentiment).collect(),
    ]
}

pub fn describe(variable: &str, values: &[f64]) -> Descriptive {
    let n = values.len();
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let sd = (n > 1).then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt());
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    Descriptive {
        variable: variable.into(),
        n,
        mean,
        sd,
        median,
        min: sorted.first().copied().unwrap_or(f64::NAN),
        max: sorted.last().copied().unwrap_or(f64::NAN),
    }
}

/// Mean, sd, median, min and max of each covariate. Age is in raw days.
pub fn descriptives(rows: &[CovariateRow]) -> Vec<Descriptive> {
    VARIABLES
        .iter()
        .zip(variable_columns(rows))
        .map(|(name, vals)| describe(name, &vals))
        .collect()
}

/// Pearson correlation; `None` when either side is constant or `n < 3`.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n != y.len() || n < 3 {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if !(sxx > 0.0 && syy > 0.0) {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub row: String,
    pub column: String,
    pub n: usize,
    pub r: Option<f64>,
    pub p_value: Option<f64>,
    /// Significant at 5%.
    pub significant: bool,
}

fn correlation(row: &str, column: &str, x: &[f64], y: &[f64]) -> Correlation {
    let n = x.len();
    let r = pearson(x, y);
    let p_value = r.and_then(|r| {
        if r.abs() >= 1.0 {
            Some(0.0)
        } else {
            student_t_p(r * ((n as f64 - 2.0) / (1.0 - r * r)).sqrt(), n as f64 - 2.0)
        }
    });
    Correlation {
        row: row.into(),
        column: column.into(),
        n,
        r,
        p_value,
        significant: p_value.is_some_and(|p| p < 0.05),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTable {
    /// Lower triangle including the diagonal, row-major.
    pub controls: Vec<Correlation>,
    pub cars: Vec<Correlation>,
    pub cavs: Vec<Correlation>,
}

/// Correlations among covariates, and of each covariate with every
/// regression-window CAR and CAV (pairwise complete by event id).
pub fn correlations(
    rows: &[CovariateRow],
    returns: &PanelResult,
    volumes: &PanelResult,
) -> CorrelationTable {
    let cols = variable_columns(rows);
    let mut controls = Vec::new();
    for i in 0..VARIABLES.len() {
        for j in 0..=i {
            controls.push(correlation(VARIABLES[i], VARIABLES[j], &cols[i], &cols[j]));
        }
    }
    let against = |panel: &PanelResult| {
        let mut out = Vec::new();
        for w in REGRESSION_WINDOWS {
            let sums: BTreeMap<u32, f64> = panel
                .event_sums(w)
                .unwrap_or_default()
                .into_iter()
                .map(|v| (v.event_id, v.value))
                .collect();
            let paired: Vec<(usize, f64)> = rows
                .iter()
                .enumerate()
                .filter_map(|(i, r)| sums.get(&r.event_id).map(|v| (i, *v)))
                .collect();
            let resp: Vec<f64> = paired.iter().map(|p| p.1).collect();
            for (k, name) in VARIABLES.iter().enumerate() {
                let cov: Vec<f64> = paired.iter().map(|p| cols[k][p.0]).collect();
                out.push(correlation(&w.to_string(), name, &resp, &cov));
            }
        }
        out
    };
    CorrelationTable {
        controls,
        cars: against(returns),
        cavs: against(volumes),
    }
}
