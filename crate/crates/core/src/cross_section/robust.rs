//! MM-estimation of linear regression with Tukey's bisquare.
//!
//! Stage one is a fast S-estimator: seeded random elemental subsets, each
//! improved by a few reweighting steps, the best few refined to convergence.
//! Its residual scale is then held fixed while an M-step at high efficiency
//! is iterated by reweighted least squares.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inference::{stars, student_t_p, Stars};

/// Bisquare constant giving a 50% breakdown S-scale at `b = 0.5`.
pub const C_BREAKDOWN: f64 = 1.5476;
/// Bisquare constant giving 95% Gaussian efficiency.
pub const C_EFFICIENCY: f64 = 4.685;

/// Name of the goodness-of-fit variant reported in [`RobustFit::adj_rw2`].
pub const RW2_VARIANT: &str = "weighted-r2";

#[derive(Debug, Error, PartialEq)]
pub enum RobustError {
    #[error("x has {rows} rows but y has {len}")]
    Dimension { rows: usize, len: usize },
    #[error("need more observations ({n}) than coefficients ({p})")]
    TooFewObservations { n: usize, p: usize },
    #[error("no non-singular elemental subset found in {tried} draws")]
    NoSubset { tried: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobustConfig {
    pub c_breakdown: f64,
    pub breakdown: f64,
    pub c_efficiency: f64,
    pub n_subsets: usize,
    pub seed: u64,
    /// Reweighting steps applied to every elemental start.
    pub refine_steps: usize,
    /// Starts kept for full refinement.
    pub n_best: usize,
    pub max_iter: usize,
    /// Relative coefficient change that ends the M-step.
    pub tolerance: f64,
}

impl Default for RobustConfig {
    fn default() -> Self {
        Self {
            c_breakdown: C_BREAKDOWN,
            breakdown: 0.5,
            c_efficiency: C_EFFICIENCY,
            n_subsets: 500,
            seed: 20_240_613,
            refine_steps: 2,
            n_best: 5,
            max_iter: 500,
            tolerance: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustFit {
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
    /// Two-sided Student-t p-values with `n - p` degrees of freedom.
    pub p_values: Vec<Option<f64>>,
    pub stars: Vec<Stars>,
    /// Bisquare weights of the final M-step, in `[0, 1]`.
    pub final_weights: Vec<f64>,
    /// S-estimate of the residual scale.
    pub scale: f64,
    pub rw2: f64,
    pub adj_rw2: f64,
    pub rw2_variant: String,
    pub n_obs: usize,
    pub converged: bool,
    pub iterations: usize,
    /// The S-stage found a perfect fit; the interpolating solution is returned.
    pub exact_fit: bool,
    pub s_coefficients: Vec<f64>,
}

/// Bisquare rho scaled to a maximum of 1.
pub fn rho(u: f64, c: f64) -> f64 {
    let t = u / c;
    if t.abs() >= 1.0 {
        1.0
    } else {
        let a = 1.0 - t * t;
        1.0 - a * a * a
    }
}

/// Bisquare psi, up to a constant factor.
pub fn psi(u: f64, c: f64) -> f64 {
    let t = u / c;
    if t.abs() >= 1.0 {
        0.0
    } else {
        let a = 1.0 - t * t;
        u * a * a
    }
}

pub fn psi_prime(u: f64, c: f64) -> f64 {
    let t = u / c;
    if t.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - t * t) * (1.0 - 5.0 * t * t)
    }
}

/// IRLS weight `psi(u) / u`; exactly 0 for `|u| >= c`.
pub fn weight(u: f64, c: f64) -> f64 {
    let t = u / c;
    if t.abs() >= 1.0 {
        0.0
    } else {
        let a = 1.0 - t * t;
        a * a
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn mean_rho(r: &DVector<f64>, s: f64, c: f64) -> f64 {
    r.iter().map(|&x| rho(x / s, c)).sum::<f64>() / r.len() as f64
}

/// M-scale `s` solving `mean(rho(r / s)) = b`; 0 when the residuals are
/// mostly exact zeros.
pub fn m_scale(r: &DVector<f64>, c: f64, b: f64) -> f64 {
    let mut abs: Vec<f64> = r.iter().map(|x| x.abs()).collect();
    let mut s = median(&mut abs) / 0.6745;
    if !(s > 0.0) {
        return 0.0;
    }
    for _ in 0..200 {
        let next = s * (mean_rho(r, s, c) / b).sqrt();
        if !(next > 0.0) {
            return 0.0;
        }
        let done = ((next - s) / s).abs() < 1e-12;
        s = next;
        if done {
            break;
        }
    }
    s
}

/// Weighted least squares via QR of the row-scaled design.
pub fn weighted_least_squares(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    w: &[f64],
) -> Option<DVector<f64>> {
    let (n, p) = x.shape();
    let mut xs = x.clone();
    let mut ys = y.clone();
    for i in 0..n {
        let sw = w[i].max(0.0).sqrt();
        xs.row_mut(i).scale_mut(sw);
        ys[i] *= sw;
    }
    let qr = xs.qr();
    let r = qr.r();
    let diag_max = (0..p).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    if !(diag_max > 0.0) || (0..p).any(|j| r[(j, j)].abs() <= 1e-12 * diag_max) {
        return None;
    }
    let qty = qr.q().transpose() * ys;
    r.solve_upper_triangular(&qty)
}

pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    weighted_least_squares(x, y, &vec![1.0; x.nrows()])
}

/// One S reweighting step: update the scale, reweight, refit.
fn s_step(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    beta: &DVector<f64>,
    scale: Option<f64>,
    c: f64,
    b: f64,
) -> Option<(DVector<f64>, f64)> {
    let r = y - x * beta;
    let s = match scale {
        Some(s) if s > 0.0 => s * (mean_rho(&r, s, c) / b).sqrt(),
        _ => m_scale(&r, c, b),
    };
    if !(s > 0.0) {
        return Some((beta.clone(), 0.0));
    }
    let w: Vec<f64> = r.iter().map(|&e| weight(e / s, c)).collect();
    weighted_least_squares(x, y, &w).map(|nb| (nb, s))
}

struct Candidate {
    beta: DVector<f64>,
    scale: f64,
}

fn s_estimate(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    cfg: &RobustConfig,
) -> Result<Candidate, RobustError> {
    let (n, p) = x.shape();
    let (c, b) = (cfg.c_breakdown, cfg.breakdown);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Vec<Candidate> = Vec::new();
    let mut found = 0usize;
    for _ in 0..cfg.n_subsets {
        let mut idx = sample(&mut rng, n, p).into_vec();
        idx.sort_unstable();
        let xs = x.select_rows(&idx);
        let ys = DVector::from_iterator(p, idx.iter().map(|&i| y[i]));
        let Some(mut beta) = xs.lu().solve(&ys) else {
            continue;
        };
        if beta.iter().any(|v| !v.is_finite()) {
            continue;
        }
        found += 1;
        let mut scale = None;
        for _ in 0..cfg.refine_steps {
            match s_step(x, y, &beta, scale, c, b) {
                Some((nb, s)) => {
                    beta = nb;
                    scale = Some(s);
                }
                None => break,
            }
        }
        let r = y - x * &beta;
        if best.len() == cfg.n_best {
            // cheap rejection: a start whose rho-mean at the worst kept scale
            // is already >= b cannot have a smaller scale
            let worst = best.last().expect("non-empty").scale;
            if worst > 0.0 && mean_rho(&r, worst, c) >= b {
                continue;
            }
        }
        let s = m_scale(&r, c, b);
        insert_best(&mut best, Candidate { beta, scale: s }, cfg.n_best);
    }
    if found == 0 {
        return Err(RobustError::NoSubset { tried: cfg.n_subsets });
    }

    let mut winner: Option<Candidate> = None;
    for cand in best {
        let mut beta = cand.beta;
        let mut scale = cand.scale;
        for _ in 0..cfg.max_iter {
            if scale == 0.0 {
                break;
            }
            let Some((nb, s)) = s_step(x, y, &beta, Some(scale), c, b) else {
                break;
            };
            let change = (&nb - &beta).norm();
            let size = nb.norm();
            beta = nb;
            scale = s;
            if change <= 1e-10 * (size + 1e-10) {
                break;
            }
        }
        let r = y - x * &beta;
        let s = m_scale(&r, c, b);
        if winner.as_ref().is_none_or(|w| s < w.scale) {
            winner = Some(Candidate { beta, scale: s });
        }
    }
    Ok(winner.expect("at least one candidate"))
}

fn insert_best(best: &mut Vec<Candidate>, cand: Candidate, keep: usize) {
    let pos = best
        .iter()
        .position(|b| cand.scale < b.scale)
        .unwrap_or(best.len());
    if pos < keep {
        best.insert(pos, cand);
        best.truncate(keep);
    }
}

/// Weighted coefficient of determination and its degrees-of-freedom
/// adjustment. A constant response gets 0 by convention.
pub fn weighted_r2(y: &DVector<f64>, fitted: &DVector<f64>, w: &[f64], n_slopes: usize) -> (f64, f64) {
    let sw: f64 = w.iter().sum();
    if !(sw > 0.0) {
        return (0.0, 0.0);
    }
    let ybar = y.iter().zip(w).map(|(v, wi)| wi * v).sum::<f64>() / sw;
    let tot: f64 = y.iter().zip(w).map(|(v, wi)| wi * (v - ybar).powi(2)).sum();
    let sse: f64 = y
        .iter()
        .zip(fitted.iter())
        .zip(w)
        .map(|((v, f), wi)| wi * (v - f).powi(2))
        .sum();
    if !(tot > 0.0) {
        return (0.0, 0.0);
    }
    let rw2 = 1.0 - sse / tot;
    let n = y.len() as f64;
    let denom = n - n_slopes as f64 - 1.0;
    let adj = if denom > 0.0 {
        1.0 - (1.0 - rw2) * (n - 1.0) / denom
    } else {
        f64::NAN
    };
    (rw2, adj.min(1.0))
}

fn exact_fit(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    s_beta: DVector<f64>,
    tol: f64,
) -> RobustFit {
    let (n, p) = x.shape();
    let r = y - x * &s_beta;
    let mut w: Vec<f64> = r.iter().map(|e| if e.abs() <= tol { 1.0 } else { 0.0 }).collect();
    let beta = match weighted_least_squares(x, y, &w) {
        Some(b) => b,
        None => {
            w = vec![1.0; n];
            ols(x, y).unwrap_or_else(|| s_beta.clone())
        }
    };
    let fitted = x * &beta;
    let (rw2, adj_rw2) = weighted_r2(y, &fitted, &w, p.saturating_sub(1));
    RobustFit {
        coefficients: beta.iter().copied().collect(),
        standard_errors: vec![0.0; p],
        p_values: vec![None; p],
        stars: vec![Stars::None; p],
        final_weights: w,
        scale: 0.0,
        rw2,
        adj_rw2,
        rw2_variant: RW2_VARIANT.into(),
        n_obs: n,
        converged: true,
        iterations: 0,
        exact_fit: true,
        s_coefficients: s_beta.iter().copied().collect(),
    }
}

fn sandwich_se(x: &DMatrix<f64>, u: &[f64], scale: f64, c: f64) -> Vec<f64> {
    let (n, p) = x.shape();
    let mut a = DMatrix::<f64>::zeros(p, p);
    let mut bm = DMatrix::<f64>::zeros(p, p);
    for i in 0..n {
        let xi = x.row(i).transpose();
        let outer = &xi * xi.transpose();
        a += &outer * psi_prime(u[i], c);
        bm += &outer * psi(u[i], c).powi(2);
    }
    let Some(a_inv) = a.try_inverse() else {
        return vec![f64::NAN; p];
    };
    let cov = &a_inv * bm * &a_inv * (scale * scale * n as f64 / (n - p) as f64);
    (0..p).map(|j| cov[(j, j)].max(0.0).sqrt()).collect()
}

/// MM-estimate of `y = X beta`. `x` should include the intercept column.
pub fn mm_regression(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    cfg: &RobustConfig,
) -> Result<RobustFit, RobustError> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(RobustError::Dimension { rows: n, len: y.len() });
    }
    if n <= p {
        return Err(RobustError::TooFewObservations { n, p });
    }
    let s = s_estimate(x, y, cfg)?;
    let mut abs_y: Vec<f64> = y.iter().map(|v| v.abs()).collect();
    let y_size = 1.0 + median(&mut abs_y);
    if s.scale <= 1e-10 * y_size {
        return Ok(exact_fit(x, y, s.beta, 1e-8 * y_size));
    }

    let c = cfg.c_efficiency;
    let mut beta = s.beta.clone();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let r = y - x * &beta;
        let w: Vec<f64> = r.iter().map(|e| weight(e / s.scale, c)).collect();
        let Some(nb) = weighted_least_squares(x, y, &w) else {
            break;
        };
        let change = (&nb - &beta).norm();
        let size = nb.norm();
        beta = nb;
        if change < cfg.tolerance * (size + cfg.tolerance) {
            converged = true;
            break;
        }
    }

    let r = y - x * &beta;
    let u: Vec<f64> = r.iter().map(|e| e / s.scale).collect();
    let w: Vec<f64> = u.iter().map(|&ui| weight(ui, c)).collect();
    let se = sandwich_se(x, &u, s.scale, c);
    let df = (n - p) as f64;
    let p_values: Vec<Option<f64>> = beta
        .iter()
        .zip(&se)
        .map(|(b, e)| student_t_p(b / e, df))
        .collect();
    let fitted = x * &beta;
    let (rw2, adj_rw2) = weighted_r2(y, &fitted, &w, p - 1);
    Ok(RobustFit {
        coefficients: beta.iter().copied().collect(),
        standard_errors: se,
        stars: p_values.iter().map(|p| p.map_or(Stars::None, stars)).collect(),
        p_values,
        final_weights: w,
        scale: s.scale,
        rw2,
        adj_rw2,
        rw2_variant: RW2_VARIANT.into(),
        n_obs: n,
        converged,
        iterations,
        exact_fit: false,
        s_coefficients: s.beta.iter().copied().collect(),
    })
}
