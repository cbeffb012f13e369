#![allow(clippy::needless_range_loop)]

mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use eventstudy::cross_section::robust::ols;
use eventstudy::cross_section::{mm_regression, pearson, RobustConfig};
use eventstudy::inference::{signed_ranks, t_test, wilcoxon_signed_rank, ZeroMethod, EXACT_MAX_N};
use eventstudy::market_model::{fit_market_model, snap, Channel, ModelOptions, RelativeSeries};
use eventstudy::window::RelWindow;

use common::{midranks, ols_normal_equations, t_two_pass, wilcoxon_enumeration_p};

fn sample(min: usize, max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, min..=max)
}

fn relative(values: &[f64]) -> RelativeSeries {
    RelativeSeries::from_fn(RelWindow::ESTIMATION, |d| values.get((d - RelWindow::ESTIMATION.start) as usize).copied())
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn snap_is_idempotent_and_near(x in -1e3f64..1e3) {
        let s = snap(x);
        prop_assert_eq!(snap(s).to_bits(), s.to_bits());
        prop_assert!((s - x).abs() <= 2f64.powi(-41));
    }

    #[test]
    fn market_model_scales_with_asset(
        bench in prop::collection::vec(-0.1f64..0.1, 141),
        noise in prop::collection::vec(-0.02f64..0.02, 141),
        c in 0.1f64..10.0,
    ) {
        let asset: Vec<f64> = bench.iter().zip(&noise).map(|(b, e)| 0.001 + 1.3 * b + e).collect();
        let scaled: Vec<f64> = asset.iter().map(|a| a * c).collect();
        let opts = ModelOptions::default();
        let f = fit_market_model(&relative(&asset), &relative(&bench), Channel::Returns, &opts).unwrap();
        let g = fit_market_model(&relative(&scaled), &relative(&bench), Channel::Returns, &opts).unwrap();
        prop_assert!(close(g.beta, c * f.beta, 1e-9));
        prop_assert!(close(g.alpha, c * f.alpha, 1e-9));
        prop_assert!(close(g.residual_std, c * f.residual_std, 1e-9));
    }

    #[test]
    fn market_model_residuals_are_orthogonal(
        bench in prop::collection::vec(-0.1f64..0.1, 141),
        asset in prop::collection::vec(-0.1f64..0.1, 141),
    ) {
        let f = fit_market_model(&relative(&asset), &relative(&bench), Channel::Returns, &ModelOptions::default()).unwrap();
        let resid: Vec<f64> = asset.iter().zip(&bench).map(|(a, b)| a - f.expected(*b)).collect();
        prop_assert!(resid.iter().sum::<f64>().abs() < 1e-12);
        prop_assert!(resid.iter().zip(&bench).map(|(e, b)| e * b).sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn t_matches_two_pass_oracle(v in sample(2, 60)) {
        let r = t_test(&v);
        if let Some(p) = r.p_value {
            prop_assert!(close(r.statistic, t_two_pass(&v), 1e-9));
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn t_is_scale_invariant(v in sample(3, 40), c in 0.01f64..100.0) {
        let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
        let (a, b) = (t_test(&v), t_test(&scaled));
        if a.p_value.is_some() {
            prop_assert!(close(a.statistic, b.statistic, 1e-9));
        }
    }

    #[test]
    fn ranks_match_counting_oracle(v in sample(1, 30)) {
        let sr = signed_ranks(&v, ZeroMethod::Wilcox);
        let oracle = midranks(&v);
        prop_assert_eq!(sr.ranks.len(), oracle.len());
        for ((r, pos), (o, opos)) in sr.ranks.iter().zip(&sr.positive).zip(&oracle) {
            prop_assert_eq!(*r, *o);
            prop_assert_eq!(pos, opos);
        }
    }

    #[test]
    fn wilcoxon_is_antisymmetric(v in sample(1, 40)) {
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        let (a, b) = (wilcoxon_signed_rank(&v), wilcoxon_signed_rank(&neg));
        prop_assert_eq!(a.statistic, -b.statistic);
        prop_assert_eq!(a.p_value, b.p_value);
    }

    #[test]
    fn wilcoxon_exact_matches_enumeration(v in sample(1, 14)) {
        let r = wilcoxon_signed_rank(&v);
        prop_assert!((r.p_value.unwrap() - wilcoxon_enumeration_p(&v)).abs() <= 1e-12);
    }

    #[test]
    fn ols_matches_normal_equations(
        rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 12..40),
        y in prop::collection::vec(-5.0f64..5.0, 40),
    ) {
        let n = rows.len();
        let design: Vec<Vec<f64>> = rows.iter().map(|r| vec![1.0, r[0], r[1], r[2]]).collect();
        let x = DMatrix::from_fn(n, 4, |i, j| design[i][j]);
        let yv = DVector::from_row_slice(&y[..n]);
        if let Some(b) = ols(&x, &yv) {
            let oracle = ols_normal_equations(&design, &y[..n]);
            for (a, o) in b.iter().zip(&oracle) {
                prop_assert!(close(*a, *o, 1e-7));
            }
        }
    }

    #[test]
    fn pearson_is_symmetric_and_bounded(x in sample(3, 30), y in sample(30, 30), c in 0.1f64..10.0) {
        let y = &y[..x.len()];
        let r = pearson(&x, y);
        prop_assert_eq!(r, pearson(y, &x));
        if let Some(r) = r {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
            let shifted: Vec<f64> = x.iter().map(|v| c * v + 3.0).collect();
            prop_assert!(close(pearson(&shifted, y).unwrap(), r, 1e-9));
        }
    }
}

fn regression_sample(seed: u64) -> (DMatrix<f64>, DVector<f64>) {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = 60;
    let x = DMatrix::from_fn(n, 3, |_, j| if j == 0 { 1.0 } else { StandardNormal.sample(&mut rng) });
    let y = DVector::from_fn(n, |i, _| {
        let e: f64 = StandardNormal.sample(&mut rng);
        0.5 + 2.0 * x[(i, 1)] - x[(i, 2)] + if i % 12 == 0 { 40.0 } else { e }
    });
    (x, y)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn mm_is_regression_and_scale_equivariant(seed in 0u64..1000, g in prop::array::uniform3(-3.0f64..3.0), c in 0.2f64..5.0) {
        let cfg = RobustConfig { n_subsets: 200, ..RobustConfig::default() };
        let (x, y) = regression_sample(seed);
        let base = mm_regression(&x, &y, &cfg).unwrap();
        let shifted = &y + &x * DVector::from_row_slice(&g);
        let moved = mm_regression(&x, &shifted, &cfg).unwrap();
        let scaled = mm_regression(&x, &(&y * c), &cfg).unwrap();
        for k in 0..3 {
            prop_assert!((moved.coefficients[k] - base.coefficients[k] - g[k]).abs() < 1e-5);
            prop_assert!((scaled.coefficients[k] - c * base.coefficients[k]).abs() < 1e-5 * c.max(1.0));
        }
    }
}

#[test]
fn exact_and_normal_p_agree_near_the_cutover() {
    let v: Vec<f64> = (1..=EXACT_MAX_N).map(|i| (i as f64) * if i % 3 == 0 { -1.0 } else { 1.0 }).collect();
    let exact = wilcoxon_signed_rank(&v).p_value.unwrap();
    let mut longer = v.clone();
    longer.push(0.5);
    let normal = wilcoxon_signed_rank(&longer).p_value.unwrap();
    assert!((exact - normal).abs() < 0.02, "{exact} vs {normal}");
}
