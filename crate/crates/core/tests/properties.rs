//! Randomized invariants across modules.

use nalgebra::DMatrix;
use pivotblend::density::{BaseDensity, SkewSpec, SpDistribution};
use pivotblend::diagnostics::{backward_blend, weighted_ecdf, weighted_ks};
use pivotblend::sim::{simulate_two_part, stream_rng, TwoPartSimSpec};
use pivotblend::speus::{absorb_pivot, speus_fit, FitOptions, SpeusProblem};
use pivotblend::twopart::{
    stratified_folds, Transform, TwoPartConfig, TwoPartParams, TwoPartProblem,
};
use proptest::prelude::*;

fn base_strategy() -> impl Strategy<Value = BaseDensity> {
    prop::sample::select(vec![
        "gaussian",
        "laplace",
        "gumbel",
        "half-normal",
        "maxwell",
        "double-rayleigh",
        "gdg:1.5,2,1.2",
        "exponential",
        "huber:1.0",
    ])
    .prop_map(|s| s.parse::<BaseDensity>().unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn cdf_is_monotone_and_inverts_quantile(
        base in base_strategy(),
        u_pivot in 0.02f64..0.98,
        sigma in 0.05f64..10.0,
        nu in 0.05f64..10.0,
        us in prop::collection::vec(0.0005f64..0.9995, 1..12),
    ) {
        let d = SpDistribution::new(base, SkewSpec::new(base.quantile(u_pivot), sigma, nu).unwrap());
        let mut us = us;
        us.sort_by(f64::total_cmp);
        let ys: Vec<f64> = us.iter().map(|&u| d.quantile(u).unwrap()).collect();
        for w in ys.windows(2) {
            prop_assert!(w[0] <= w[1]);
        }
        for (&u, &y) in us.iter().zip(&ys) {
            prop_assert!((d.cdf(y) - u).abs() < 1e-9, "u {} y {} cdf {}", u, y, d.cdf(y));
            prop_assert!(d.pdf(y) >= 0.0);
        }
        let p = d.mixing_prob();
        prop_assert!((d.cdf_at_pivot() - p).abs() < 1e-12);
    }

    #[test]
    fn blend_weights_form_two_levels(
        r in prop::collection::vec(-5.0f64..5.0, 1..60),
        m in -1.0f64..1.0,
        sigma in 0.1f64..4.0,
        nu in 0.1f64..4.0,
    ) {
        let skew = SkewSpec::new(m, sigma, nu).unwrap();
        let ws = backward_blend(&r, &skew).unwrap();
        let total: f64 = ws.weights.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        let (l, rr) = (ws.n_left as f64, ws.n_right as f64);
        prop_assert!((ws.left_mass() - l * nu / (l * nu + rr * sigma)).abs() < 1e-12);
        prop_assert!((ws.n_eff() - 1.0 / ws.weights.iter().map(|w| w * w).sum::<f64>()).abs() < 1e-9);
        prop_assert!(ws.n_eff() <= r.len() as f64 + 1e-9);
        let mut prev = 0.0;
        for t in [-10.0, -2.0, -0.5, 0.0, 0.5, 2.0, 10.0] {
            let f = weighted_ecdf(&ws, t);
            prop_assert!(f >= prev - 1e-15 && f <= 1.0 + 1e-12);
            prev = f;
        }
        let ks = weighted_ks(&ws, &BaseDensity::gaussian()).unwrap();
        prop_assert!((0.0..=1.0).contains(&ks.stat) && (0.0..=1.0).contains(&ks.pvalue));
    }

    #[test]
    fn transforms_round_trip(y in 1e-3f64..1e3, lambda in -1.5f64..2.0) {
        for t in [Transform::Log, Transform::Identity, Transform::Power(lambda)] {
            let back = t.invert(t.apply(y)).unwrap();
            prop_assert!((back - y).abs() <= 1e-9 * y.max(1.0), "{:?}: {} -> {}", t, y, back);
            let parsed: Transform = t.to_string().parse().unwrap();
            prop_assert_eq!(parsed, t);
        }
    }

    #[test]
    fn group_norms_follow_column_rescaling(c in 0.1f64..20.0, j in 0usize..4) {
        let spec = TwoPartSimSpec::benchmark(120, 4, 2).unwrap();
        let (x, y) = simulate_two_part(&spec, &mut stream_rng(5, 0)).unwrap();
        let prob = TwoPartProblem::new(x.clone(), y.clone(), TwoPartConfig::default()).unwrap();
        let mut xs = x.clone();
        xs.column_mut(j).scale_mut(c);
        let scaled = TwoPartProblem::new(xs, y, TwoPartConfig::default()).unwrap();
        let th = spec.truth();
        let mut th_s = th.clone();
        th_s.b[j] /= c;
        th_s.beta[j] /= c;
        let (a, b) = (prob.group_norms(&th), scaled.group_norms(&th_s));
        for k in 0..4 {
            prop_assert!((a[k] - b[k]).abs() <= 1e-9 * a[k].max(1.0));
        }
    }
}

#[test]
fn flat_parameter_layout_round_trips() {
    let th = TwoPartParams {
        b: vec![1.0, 2.0],
        b0: 3.0,
        beta: vec![4.0, 5.0],
        alpha: 6.0,
        s: 7.0,
        t: 8.0,
        m: 9.0,
    };
    let v = th.to_vec();
    assert_eq!(v, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
    assert_eq!(TwoPartParams::from_vec(&v, 2).unwrap(), th);
    assert!(TwoPartParams::from_vec(&v, 3).is_err());
}

#[test]
fn folds_keep_both_outcome_types() {
    let spec = TwoPartSimSpec::benchmark(200, 3, 1).unwrap();
    let (x, y) = simulate_two_part(&spec, &mut stream_rng(8, 0)).unwrap();
    let prob = TwoPartProblem::new(x, y.clone(), TwoPartConfig::default()).unwrap();
    let folds = stratified_folds(&prob, 5, 3).unwrap();
    assert_eq!(folds, stratified_folds(&prob, 5, 3).unwrap());
    for k in 0..5 {
        let rows: Vec<usize> = (0..y.len()).filter(|&i| folds[i] == k).collect();
        assert!(rows.iter().any(|&i| y[i] == 0.0) && rows.iter().any(|&i| y[i] > 0.0));
    }
}

#[test]
fn equal_scale_fits_absorb_the_pivot() {
    let x = DMatrix::from_fn(60, 1, |i, _| (i as f64 * 0.37).sin());
    let y: Vec<f64> = (0..60).map(|i| 2.0 * x[(i, 0)] + ((i * 7919) % 13) as f64 / 13.0).collect();
    let prob = SpeusProblem::new(x, y, BaseDensity::gaussian()).unwrap();
    let fit = speus_fit(&prob, &FitOptions { equal_scales: true, ..FitOptions::default() }).unwrap();
    let ab = absorb_pivot(&fit);
    assert!(ab.absorbable);
    let expected = fit.alpha + (1.0 - fit.skew.sigma) * fit.skew.m;
    assert!((ab.alpha_prime - expected).abs() < 1e-12);
}
