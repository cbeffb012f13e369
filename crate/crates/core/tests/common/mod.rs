//! Independent reference implementations shared by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use std::path::PathBuf;

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

/// Midranks of `|x|` over the non-zero values, by direct counting.
pub fn midranks(values: &[f64]) -> Vec<(f64, bool)> {
    let nz: Vec<f64> = values.iter().copied().filter(|v| *v != 0.0).collect();
    nz.iter()
        .map(|v| {
            let a = v.abs();
            let below = nz.iter().filter(|u| u.abs() < a).count() as f64;
            let equal = nz.iter().filter(|u| u.abs() == a).count() as f64;
            (below + (equal + 1.0) / 2.0, *v > 0.0)
        })
        .collect()
}

/// Two-sided signed-rank p-value by enumerating all 2^n sign patterns.
pub fn wilcoxon_enumeration_p(values: &[f64]) -> f64 {
    let ranked = midranks(values);
    let n = ranked.len();
    let observed: f64 = ranked.iter().filter(|r| r.1).map(|r| r.0).sum();
    let (mut ge, mut le) = (0u64, 0u64);
    for mask in 0u64..(1 << n) {
        let w: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranked[i].0).sum();
        if w >= observed - 1e-9 {
            ge += 1;
        }
        if w <= observed + 1e-9 {
            le += 1;
        }
    }
    let total = (1u64 << n) as f64;
    (2.0 * (ge.min(le) as f64) / total).min(1.0)
}

/// OLS through the normal equations, solved by Gaussian elimination.
pub fn ols_normal_equations(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let p = x[0].len();
    let mut a = vec![vec![0.0; p + 1]; p];
    for (row, yi) in x.iter().zip(y) {
        for i in 0..p {
            for j in 0..p {
                a[i][j] += row[i] * row[j];
            }
            a[i][p] += row[i] * yi;
        }
    }
    for c in 0..p {
        let piv = (c..p).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, piv);
        for r in 0..p {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..=p {
                    a[r][k] -= f * a[c][k];
                }
            }
        }
    }
    (0..p).map(|i| a[i][p] / a[i][i]).collect()
}

/// Two-pass sample mean and t statistic.
pub fn t_two_pass(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    mean / (var / n).sqrt()
}
