//! Cross-event hypothesis tests: one-sample t-test, Wilcoxon signed-rank
//! test and significance stars.

use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

/// Largest effective sample size for which the signed-rank p-value is
/// computed from the exact null distribution.
pub const EXACT_MAX_N: usize = 25;

/// Significance marker: `*` at 10%, `**` at 5%, `***` at 1%.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stars {
    #[default]
    None,
    One,
    Two,
    Three,
}

impl Stars {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stars::None => "",
            Stars::One => "*",
            Stars::Two => "**",
            Stars::Three => "***",
        }
    }
}

impl fmt::Display for Stars {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Strict inequalities: exactly 0.10 earns no star.
pub fn stars(p_value: f64) -> Stars {
    if p_value < 0.01 {
        Stars::Three
    } else if p_value < 0.05 {
        Stars::Two
    } else if p_value < 0.10 {
        Stars::One
    } else {
        Stars::None
    }
}

/// Why a statistic is not a regular finite value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFlag {
    /// Too few observations for the test.
    TooFew,
    /// Sample variance is zero; the statistic is infinite (or NaN at mean 0).
    ZeroVariance,
    /// Every value is zero; no ranks to test.
    AllZero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    /// Observations used; for the rank test, after zeros are dropped.
    pub n_effective: usize,
    /// Two-sided p-value; absent when flagged.
    pub p_value: Option<f64>,
    pub stars: Stars,
    pub flag: Option<TestFlag>,
}

impl TestResult {
    fn flagged(statistic: f64, n_effective: usize, flag: TestFlag) -> Self {
        Self {
            statistic,
            n_effective,
            p_value: None,
            stars: Stars::None,
            flag: Some(flag),
        }
    }

    fn regular(statistic: f64, n_effective: usize, p: f64) -> Self {
        let p = p.clamp(0.0, 1.0);
        Self {
            statistic,
            n_effective,
            p_value: Some(p),
            stars: stars(p),
            flag: None,
        }
    }

    pub fn is_defined(&self) -> bool {
        self.flag.is_none()
    }
}

/// One-sample t-test of a zero mean; `t = mean / (sd / sqrt(n))` with `n - 1`
/// degrees of freedom.
pub fn t_test(values: &[f64]) -> TestResult {
    let n = values.len();
    if n < 2 {
        return TestResult::flagged(f64::NAN, n, TestFlag::TooFew);
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let sd = (ss / (nf - 1.0)).sqrt();
    if sd == 0.0 {
        let t = if mean == 0.0 { f64::NAN } else { mean.signum() * f64::INFINITY };
        return TestResult::flagged(t, n, TestFlag::ZeroVariance);
    }
    let t = mean / (sd / nf.sqrt());
    let dist = StudentsT::new(0.0, 1.0, nf - 1.0).expect("valid degrees of freedom");
    let p = 2.0 * dist.cdf(-t.abs());
    TestResult::regular(t, n, p)
}

/// Treatment of zero values in the signed-rank test.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroMethod {
    /// Drop zeros before ranking.
    #[default]
    Wilcox,
    /// Rank zeros with everything else, then drop them.
    Pratt,
}

/// Signed-rank statistics before a p-value is attached.
#[derive(Clone, Debug, PartialEq)]
pub struct SignedRanks {
    /// Ranks of the retained observations, midranks for ties.
    pub ranks: Vec<f64>,
    /// Whether each retained observation is positive.
    pub positive: Vec<bool>,
    pub w_plus: f64,
    /// `sum(t^3 - t)` over tie groups.
    pub tie_term: f64,
}

fn midranks(abs: &[f64]) -> (Vec<f64>, f64) {
    let mut idx: Vec<usize> = (0..abs.len()).collect();
    idx.sort_by(|&a, &b| abs[a].total_cmp(&abs[b]));
    let mut ranks = vec![0.0; abs.len()];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && abs[idx[j + 1]] == abs[idx[i]] {
            j += 1;
        }
        // positions i..=j share the average of ranks i+1..=j+1
        let r = (i + j + 2) as f64 / 2.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    (ranks, tie_term)
}

pub fn signed_ranks(values: &[f64], zeros: ZeroMethod) -> SignedRanks {
    let (ranks, positive, tie_term) = match zeros {
        ZeroMethod::Wilcox => {
            let kept: Vec<f64> = values.iter().copied().filter(|v| *v != 0.0).collect();
            let abs: Vec<f64> = kept.iter().map(|v| v.abs()).collect();
            let (ranks, tie) = midranks(&abs);
            (ranks, kept.iter().map(|v| *v > 0.0).collect(), tie)
        }
        ZeroMethod::Pratt => {
            let abs: Vec<f64> = values.iter().map(|v| v.abs()).collect();
            let (all, _) = midranks(&abs);
            let mut ranks = Vec::new();
            let mut positive = Vec::new();
            for (v, r) in values.iter().zip(all) {
                if *v != 0.0 {
                    ranks.push(r);
                    positive.push(*v > 0.0);
                }
            }
            // tie correction over the retained ranks
            let tie = tie_correction(&ranks);
            (ranks, positive, tie)
        }
    };
    let w_plus = ranks
        .iter()
        .zip(&positive)
        .filter(|(_, p)| **p)
        .map(|(r, _)| *r)
        .sum();
    SignedRanks {
        ranks,
        positive,
        w_plus,
        tie_term,
    }
}

fn tie_correction(ranks: &[f64]) -> f64 {
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie = 0.0;
    for group in sorted.chunk_by(|a, b| a == b) {
        let t = group.len() as f64;
        tie += t * t * t - t;
    }
    tie
}

/// Null distribution of `2 * W+` as exact integer counts over all `2^n` sign
/// assignments. Ranks are integers or half-integers, so doubling makes every
/// attainable sum an integer.
fn doubled_rank_sum_counts(ranks: &[f64]) -> Vec<u128> {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0u128; total + 1];
    counts[0] = 1;
    let mut reach = 0;
    for &r in &doubled {
        for s in (0..=reach).rev() {
            if counts[s] != 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    counts
}

/// Exact two-sided p-value `min(1, 2 * min(P(W+ >= w), P(W+ <= w)))` under
/// the sign-symmetric null, conditional on the observed ranks.
pub fn exact_signed_rank_p(ranks: &[f64], w_plus: f64) -> f64 {
    let counts = doubled_rank_sum_counts(ranks);
    let w2 = (2.0 * w_plus).round() as usize;
    let upper: u128 = counts[w2.min(counts.len())..].iter().sum();
    let lower: u128 = counts[..=w2.min(counts.len() - 1)].iter().sum();
    let total = 2f64.powi(ranks.len() as i32);
    (2.0 * upper.min(lower) as f64 / total).min(1.0)
}

/// Configuration for [`wilcoxon_signed_rank_with`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WilcoxonOptions {
    pub zeros: ZeroMethod,
}

/// Wilcoxon signed-rank test with zeros dropped.
pub fn wilcoxon_signed_rank(values: &[f64]) -> TestResult {
    wilcoxon_signed_rank_with(values, WilcoxonOptions::default())
}

/// The reported statistic is always the continuity-corrected normal `z`.
/// The p-value is exact for `n_effective <= 25` and normal otherwise.
pub fn wilcoxon_signed_rank_with(values: &[f64], opts: WilcoxonOptions) -> TestResult {
    let sr = signed_ranks(values, opts.zeros);
    let n = sr.ranks.len();
    if n == 0 {
        return TestResult::flagged(f64::NAN, 0, TestFlag::AllZero);
    }
    let nf = n as f64;
    let rank_total: f64 = sr.ranks.iter().sum();
    let mean = rank_total / 2.0;
    let var = match opts.zeros {
        ZeroMethod::Wilcox => nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - sr.tie_term / 48.0,
        // variance of the signed sum of the actual retained ranks
        ZeroMethod::Pratt => sr.ranks.iter().map(|r| r * r).sum::<f64>() / 4.0,
    };
    let d = sr.w_plus - mean;
    let corrected = if d.abs() <= 0.5 { 0.0 } else { d - 0.5 * d.signum() };
    let z = if var > 0.0 { corrected / var.sqrt() } else { 0.0 };
    let p = if n <= EXACT_MAX_N {
        exact_signed_rank_p(&sr.ranks, sr.w_plus)
    } else {
        2.0 * standard_normal().cdf(-z.abs())
    };
    TestResult::regular(z, n, p)
}

pub(crate) fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Two-sided p-value of a Student-t statistic.
pub fn student_t_p(t: f64, df: f64) -> Option<f64> {
    if !t.is_finite() || !(df > 0.0) {
        return None;
    }
    let dist = StudentsT::new(0.0, 1.0, df).ok()?;
    Some((2.0 * dist.cdf(-t.abs())).clamp(0.0, 1.0))
}
