//! Acceptance suite. Each test prints one `PASS`/`FAIL` line to stderr
//! (uncaptured) and then asserts, so a red criterion stays visible in the
//! test log.

use std::io::Write;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use pivotblend::density::{BaseDensity, SkewSpec, SpDistribution};
use pivotblend::diagnostics::{backward_blend, weighted_kde};
use pivotblend::sim::{preset, run_experiment, simulate_dataset, simulate_two_part, stream_rng, TwoPartSimSpec};
use pivotblend::speus::{rank_criterion, speus_fit, FitOptions, SpeusProblem};
use pivotblend::twopart::{
    effective_noise, s2_fit, s2_objective, s2_objective_and_gradient, select_lambda_scv, Transform,
    TwoPartConfig, TwoPartOptions, TwoPartParams, TwoPartProblem,
};
use rand::Rng;
use rand_distr::{Distribution, Normal as RNormal};
use rayon::prelude::*;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let line = format!(
        "[criterion {id}] {} {name}: {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).unwrap()
}

/// Adaptive Simpson on `[a, b]`, pre-split into 32 panels.
fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    if b <= a {
        return 0.0;
    }
    let k = 32;
    let h = (b - a) / k as f64;
    (0..k)
        .map(|i| {
            let (x0, x1) = (a + i as f64 * h, a + (i + 1) as f64 * h);
            let xm = 0.5 * (x0 + x1);
            let (f0, fm, f1) = (f(x0), f(xm), f(x1));
            rec(f, x0, x1, f0, fm, f1, h / 6.0 * (f0 + 4.0 * fm + f1), tol / k as f64, 40)
        })
        .sum()
}

/// `∫_{lo}^{hi} f` split at the given interior points.
fn integrate_split<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, cuts: &[f64]) -> f64 {
    let mut pts: Vec<f64> = cuts.iter().copied().filter(|&c| c > lo && c < hi).collect();
    pts.push(lo);
    pts.push(hi);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts.windows(2).map(|w| simpson(f, w[0], w[1], 1e-13)).sum()
}

fn builtin_bases() -> Vec<BaseDensity> {
    [
        "gaussian",
        "laplace",
        "gumbel",
        "half-normal",
        "maxwell",
        "double-rayleigh",
        "gdg:1,2,1.5",
        "exponential",
        "huber:1.345",
    ]
    .iter()
    .map(|s| s.parse().unwrap())
    .collect()
}

fn benchmark_line(name: &str, ratio: f64, checks: &[(&str, f64)], id: u32) -> bool {
    let t = Instant::now();
    let spec = preset(name, ratio, 50, 2024).unwrap();
    let res = run_experiment(&spec).unwrap();
    let m = &res.metrics;
    let mut pass = m.n_failed == 0;
    let mut detail = Vec::new();
    for &(col, limit) in checks {
        let v = match col {
            "beta" => m.err_beta,
            "sigma" => m.err_sigma,
            "nu" => m.err_nu,
            _ => unreachable!(),
        };
        pass &= v <= limit;
        detail.push(format!("Err({col}) = {v:.4} (limit {limit})"));
    }
    detail.push(format!("{} failed reps, {:.0}s", m.n_failed, t.elapsed().as_secs_f64()));
    report(id, &format!("{name} ratio {ratio}, 50 reps"), pass, &detail.join(", "));
    pass
}

#[test]
fn criterion_1_ex2_skewed_gaussian_benchmark() {
    let pass = benchmark_line("ex2-gauss", 3.0, &[("beta", 0.10), ("sigma", 0.30), ("nu", 0.15)], 1);
    assert!(pass);
}

#[test]
fn criterion_2_ex1_skewed_laplace_benchmark() {
    let pass = benchmark_line("ex1-laplace", 6.0, &[("beta", 0.25), ("nu", 0.12)], 2);
    assert!(pass);
}

#[test]
fn criterion_3_half_normal_and_double_rayleigh_benchmarks() {
    let a = benchmark_line("ex3", 4.0, &[("beta", 0.15)], 3);
    let b = benchmark_line("ex5", 4.0, &[("sigma", 0.10)], 3);
    assert!(a && b);
}

#[test]
fn criterion_4_density_family_properties() {
    let t = Instant::now();
    let scales = [0.2, 1.0, 5.0];
    let mut grid = Vec::new();
    for b in builtin_bases() {
        for k in 1..=9 {
            let m = b.quantile(k as f64 / 10.0);
            for &s in &scales {
                for &v in &scales {
                    grid.push((b, m, s, v));
                }
            }
        }
    }
    // worst normalization, continuity, cdf-vs-integral, round trip, closed split, numeric split
    let worst: Vec<[f64; 6]> = grid
        .par_iter()
        .map(|&(base, m, sigma, nu)| {
            let d = SpDistribution::new(base, SkewSpec::new(m, sigma, nu).unwrap());
            let (a, b) = base.truncation();
            let to_y = |x: f64| if x <= m { m + sigma * (x - m) } else { m + nu * (x - m) };
            let (ylo, yhi) = (to_y(a), to_y(b));
            let mut cuts: Vec<f64> = base.breakpoints().into_iter().map(to_y).collect();
            cuts.push(m);
            let pdf = |y: f64| d.pdf(y);
            let norm = (integrate_split(&pdf, ylo, yhi, &cuts) - 1.0).abs();
            let left = d.pdf(m);
            let right = d.pdf(m + 1e-15 * m.abs().max(1.0));
            let cont = (left - right).abs();
            let mut cdf_err: f64 = 0.0;
            for u in [0.05, 0.3, 0.6, 0.95] {
                let y = d.quantile(u).unwrap();
                cdf_err = cdf_err.max((integrate_split(&pdf, ylo, y, &cuts) - d.cdf(y)).abs());
            }
            let mut rt: f64 = 0.0;
            for u in [0.001, 0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99, 0.999] {
                rt = rt.max((d.cdf(d.quantile(u).unwrap()) - u).abs());
            }
            let q = base.cdf(m);
            let closed = q * sigma / (q * sigma + (1.0 - q) * nu);
            let split_closed = (d.cdf_at_pivot() - closed).abs();
            let split_num = (integrate_split(&pdf, ylo, m, &cuts) - closed).abs();
            [norm, cont, cdf_err, rt, split_closed, split_num]
        })
        .collect();
    let mut w = [0.0f64; 6];
    for r in &worst {
        for k in 0..6 {
            w[k] = w[k].max(r[k]);
        }
    }
    let limits = [1e-6, 1e-12, 1e-8, 1e-9, 1e-14, 1e-8];

    // sampling: every base at a left-skewed, symmetric and right-skewed spec
    let n = 100_000;
    let crit = 1.63 / (n as f64).sqrt();
    let mut cases = Vec::new();
    for b in builtin_bases() {
        for (u, s, v) in [(0.1, 0.2, 5.0), (0.5, 1.0, 1.0), (0.9, 5.0, 0.2)] {
            cases.push(SpDistribution::new(b, SkewSpec::new(b.quantile(u), s, v).unwrap()));
        }
    }
    let ks: Vec<f64> = cases
        .par_iter()
        .map(|d| {
            let mut x = d.sample(n, 99);
            x.sort_by(f64::total_cmp);
            x.iter()
                .enumerate()
                .map(|(i, &v)| {
                    let f = d.cdf(v);
                    (f - i as f64 / n as f64).abs().max((f - (i + 1) as f64 / n as f64).abs())
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let ks_max = ks.iter().copied().fold(0.0, f64::max);
    let pass = w.iter().zip(&limits).all(|(v, l)| v <= l) && ks_max < crit && t.elapsed().as_secs() < 120;
    report(
        4,
        &format!("density properties over {} grid points", grid.len()),
        pass,
        &format!(
            "normalization {:.1e}, continuity {:.1e}, cdf vs quadrature {:.1e}, round trip {:.1e}, \
             split closed {:.1e}, split quadrature {:.1e}, max KS {ks_max:.4} (1% critical {crit:.4}), {:.0}s",
            w[0],
            w[1],
            w[2],
            w[3],
            w[4],
            w[5],
            t.elapsed().as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_5_backward_blend_recovers_the_base() {
    let nd = std_normal();
    let skew = SkewSpec::new(nd.inverse_cdf(0.75), 0.3, 0.9).unwrap();
    let d = SpDistribution::new(BaseDensity::gaussian(), skew);
    let x = d.sample(100_000, 5);
    let ws = backward_blend(&x, &skew).unwrap();
    // weighted ECDF sup distance, both sides of every jump
    let mut idx: Vec<usize> = (0..ws.len()).collect();
    idx.sort_by(|&a, &b| ws.values[a].total_cmp(&ws.values[b]));
    let mut cum = 0.0;
    let mut ecdf: f64 = 0.0;
    for &i in &idx {
        let f = nd.cdf(ws.values[i]);
        ecdf = ecdf.max((f - cum).abs());
        cum += ws.weights[i];
        ecdf = ecdf.max((f - cum).abs());
    }
    let grid: Vec<f64> = (0..=600).map(|k| -3.0 + k as f64 * 0.01).collect();
    let dens = weighted_kde(&x, &skew, &grid, None).unwrap();
    let kde = grid
        .iter()
        .zip(&dens)
        .map(|(&t, &f)| (f - nd.pdf(t)).abs())
        .fold(0.0, f64::max);
    let pass = ecdf < 0.01 && kde < 0.03;
    report(
        5,
        "backward pivot-blend of 1e5 skewed Gaussian draws",
        pass,
        &format!("weighted ECDF sup distance {ecdf:.4} (< 0.01), KDE sup error {kde:.4} (< 0.03)"),
    );
    assert!(pass);
}

fn central_diff<F: Fn(&[f64]) -> f64>(f: F, x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|k| {
            let h = 1e-6 * x[k].abs().max(1.0);
            let mut a = x.to_vec();
            let mut b = x.to_vec();
            a[k] += h;
            b[k] -= h;
            (f(&a) - f(&b)) / (2.0 * h)
        })
        .collect()
}

fn rel_err(g: &[f64], fd: &[f64]) -> f64 {
    let diff: f64 = g.iter().zip(fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = g.iter().map(|a| a * a).sum::<f64>().sqrt();
    diff / norm.max(1.0)
}

#[test]
fn criterion_6_gradients_match_finite_differences() {
    let mut rng = stream_rng(606, 0);
    let spec = preset("ex2-gauss", 3.0, 1, 606).unwrap();
    let data = simulate_dataset(&spec, &mut rng).unwrap();
    let mut worst_sp: f64 = 0.0;
    for base in [BaseDensity::gaussian(), "gumbel".parse().unwrap()] {
        let prob = SpeusProblem::new(data.x.clone(), data.y.clone(), base).unwrap();
        for _ in 0..20 {
            let mut th: Vec<f64> = spec.truth.beta_star.iter().map(|b| b + rng.random_range(-0.3..0.3)).collect();
            th.push(rng.random_range(-0.5..0.5));
            th.push(rng.random_range(0.3f64..2.0).ln());
            th.push(rng.random_range(0.3f64..2.0).ln());
            th.push(rng.random_range(-1.0..1.0));
            let p = 3;
            let f = |v: &[f64]| prob.objective(&v[..p], v[p], v[p + 1], v[p + 2], v[p + 3]);
            let (_, g) = prob.objective_and_gradient(&th[..p], th[p], th[p + 1], th[p + 2], th[p + 3]);
            worst_sp = worst_sp.max(rel_err(&g, &central_diff(f, &th)));
        }
    }

    let mut tp = TwoPartSimSpec::benchmark(300, 6, 2).unwrap();
    tp.base = "huber:1.345".parse().unwrap();
    let (x, y) = simulate_two_part(&tp, &mut rng).unwrap();
    let config = TwoPartConfig {
        base: tp.base,
        ..TwoPartConfig::default()
    };
    let prob = TwoPartProblem::new(x, y, config).unwrap();
    let p = prob.p();
    let mut worst_s2: f64 = 0.0;
    for _ in 0..20 {
        let mut th = tp.truth();
        for j in 0..p {
            th.b[j] += rng.random_range(-0.4..0.4);
            th.beta[j] += rng.random_range(-0.4..0.4);
        }
        th.b0 += rng.random_range(-0.3..0.3);
        th.alpha += rng.random_range(-0.3..0.3);
        th.s += rng.random_range(-0.5..0.5);
        th.t += rng.random_range(-0.5..0.5);
        th.m += rng.random_range(-0.5..0.5);
        let lambda = 5.0;
        let v = th.to_vec();
        let f = |v: &[f64]| s2_objective(&prob, &TwoPartParams::from_vec(v, p).unwrap(), lambda).unwrap();
        let (_, g) = s2_objective_and_gradient(&prob, &th, lambda).unwrap();
        worst_s2 = worst_s2.max(rel_err(&g, &central_diff(f, &v)));
    }
    let pass = worst_sp < 1e-5 && worst_s2 < 1e-5;
    report(
        6,
        "analytic gradients vs central differences at 20 points per objective",
        pass,
        &format!("pivot-blend criterion {worst_sp:.2e}, two-part criterion {worst_s2:.2e} (< 1e-5)"),
    );
    assert!(pass);
}

const DELTA: f64 = 1.345;

fn huber(u: f64) -> f64 {
    if u.abs() <= DELTA {
        0.5 * u * u
    } else {
        DELTA * u.abs() - 0.5 * DELTA * DELTA
    }
}

/// Normalized distribution function of `exp(-huber(u))`.
fn huber_cdf(m: f64) -> f64 {
    let nd = std_normal();
    let c = (2.0 * std::f64::consts::PI).sqrt() * (2.0 * nd.cdf(DELTA) - 1.0)
        + 2.0 * (-0.5 * DELTA * DELTA).exp() / DELTA;
    integrate_split(&|u: f64| (-huber(u)).exp(), -80.0, m, &[-DELTA, DELTA]) / c
}

/// Per-row loss of a positive observation `y` in terms of its linear
/// predictor, pivot and inverse scales.
fn row_loss(y: f64, mu: f64, m: f64, inv_s: f64, inv_n: f64) -> f64 {
    let e = y - mu - m;
    let u = if e <= 0.0 { e * inv_s + m } else { e * inv_n + m };
    let q = huber_cdf(m);
    huber(u) + (q / inv_s + (1.0 - q) / inv_n).ln()
}

#[test]
fn criterion_7_effective_noise_bounds_and_values() {
    let huber_base: BaseDensity = "huber:1.345".parse().unwrap();
    let mut all_bounds = true;
    let mut worst: f64 = 0.0;
    let mut rows = 0;
    for seed in 0..10u64 {
        let mut spec = TwoPartSimSpec::benchmark(300, 5, 2).unwrap();
        spec.base = huber_base;
        let mut rng = stream_rng(700 + seed, 0);
        let (x, y) = simulate_two_part(&spec, &mut rng).unwrap();
        let config = TwoPartConfig {
            base: huber_base,
            transform: Transform::Log,
            ..TwoPartConfig::default()
        };
        let prob = TwoPartProblem::new(x.clone(), y.clone(), config).unwrap();
        let th = spec.truth();
        let eff = effective_noise(&prob, &th).unwrap();
        let (m, sigma, nu) = (th.m, th.s.exp(), th.t.exp());
        let (mb, bb) = (DELTA, 1.0);
        let n = prob.n_pos();
        let eta_bound = mb / sigma.min(nu) + bb;
        let m_bound = (1.0 - 1.0 / sigma).abs().max((1.0 - 1.0 / nu).abs()) * mb + (sigma - nu).abs() / sigma.min(nu);
        let tol = 1e-12;
        all_bounds &= eff.eps_eta.iter().all(|e| e.abs() <= eta_bound + tol);
        all_bounds &= eff.eps_m.iter().all(|e| e.abs() <= m_bound + tol);
        for i in 0..n {
            let b = mb * eff.raw[i].abs() + sigma.max(nu);
            all_bounds &= eff.eps_sigma_nu[i].abs() <= b + tol && eff.eps_sigma_nu[n + i].abs() <= b + tol;
        }
        all_bounds &= eff.within_bounds();

        // numeric gradients of an independently written loss
        let close = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
        let pos: Vec<usize> = (0..y.len()).filter(|&i| y[i] > 0.0).collect();
        for (k, &i) in pos.iter().enumerate().take(40) {
            let yi = y[i].ln();
            let mu = (0..spec.p).map(|j| x[(i, j)] * th.beta[j]).sum::<f64>() + th.alpha;
            let v = [mu, m, 1.0 / sigma, 1.0 / nu];
            let g = central_diff(|w| row_loss(yi, w[0], w[1], w[2], w[3]), &v);
            worst = worst
                .max(close(-g[0], eff.eps_eta[k]))
                .max(close(-g[1], eff.eps_m[k]))
                .max(close(-g[2], eff.eps_sigma_nu[k]))
                .max(close(-g[3], eff.eps_sigma_nu[n + k]));
            rows += 1;
        }
        for i in 0..y.len() {
            let eta = (0..spec.p).map(|j| x[(i, j)] * th.b[j]).sum::<f64>() + th.b0;
            let z = if y[i] == 0.0 { 1.0 } else { 0.0 };
            let l = |w: &[f64]| (1.0 + w[0].exp()).ln() - w[0] * z;
            let g = central_diff(l, &[eta]);
            worst = worst.max(close(-g[0], eff.eps_eta[n + i]));
        }
    }
    let pass = all_bounds && worst < 1e-5;
    report(
        7,
        "effective noise on 10 Huber/logistic datasets",
        pass,
        &format!(
            "bounds hold componentwise: {all_bounds}; worst relative gap to numeric gradients {worst:.2e} over {rows} continuous rows plus all binary rows (< 1e-5)"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_8_two_part_support_recovery() {
    let t = Instant::now();
    let spec = TwoPartSimSpec::benchmark(400, 20, 4).unwrap();
    let truth = spec.support();
    let opts = TwoPartOptions::default();
    let reps = 20;
    let mut good = 0;
    let mut sizes = Vec::new();
    for r in 0..reps {
        let mut rng = stream_rng(77, r);
        let (x, y) = simulate_two_part(&spec, &mut rng).unwrap();
        let prob = TwoPartProblem::new(x, y, TwoPartConfig::default()).unwrap();
        let scv = select_lambda_scv(&prob, 5, 30, r, &opts).unwrap();
        let sel = &scv.selected().support;
        let false_rows = sel.iter().filter(|j| !truth.contains(j)).count();
        good += (truth.iter().all(|j| sel.contains(j)) && false_rows <= 2) as usize;
        sizes.push(sel.len());
    }
    let rate = good as f64 / reps as f64;
    let secs = t.elapsed().as_secs_f64();
    let pass = rate >= 0.8 && secs < 600.0;
    report(
        8,
        "SCV support recovery, N=400, p=20, 4 active rows",
        pass,
        &format!("{good}/{reps} replications exact up to 2 false rows ({:.0}%), selected sizes {sizes:?}, {secs:.0}s", 100.0 * rate),
    );
    assert!(pass);
}

/// Newton-Raphson logistic regression of `z` on `[1, X]`.
fn irls(x: &DMatrix<f64>, z: &[f64]) -> Vec<f64> {
    let (n, p) = (x.nrows(), x.ncols());
    let xd = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });
    let mut w = DVector::zeros(p + 1);
    for _ in 0..100 {
        let eta = &xd * &w;
        let mu: Vec<f64> = eta.iter().map(|e| 1.0 / (1.0 + (-e).exp())).collect();
        let grad = xd.transpose() * DVector::from_iterator(n, (0..n).map(|i| z[i] - mu[i]));
        let mut h = DMatrix::zeros(p + 1, p + 1);
        for i in 0..n {
            let r = xd.row(i);
            h += r.transpose() * r * (mu[i] * (1.0 - mu[i]));
        }
        let step = h.cholesky().unwrap().solve(&grad);
        w += &step;
        if step.amax() < 1e-13 {
            break;
        }
    }
    w.iter().copied().collect()
}

#[test]
fn criterion_9_reduction_identities() {
    // equal scales: Gaussian pivot-blend fit is least squares
    let spec = preset("ex2-gauss", 3.0, 1, 909).unwrap();
    let mut worst_ls: f64 = 0.0;
    for k in 0..5 {
        let d = simulate_dataset(&spec, &mut stream_rng(909, k)).unwrap();
        let prob = SpeusProblem::new(d.x.clone(), d.y.clone(), BaseDensity::gaussian())
            .unwrap()
            .with_penalties(0.0, 0.0)
            .unwrap();
        let opts = FitOptions {
            equal_scales: true,
            grad_tol: 1e-10,
            obj_tol: 1e-16,
            ..FitOptions::default()
        };
        let fit = speus_fit(&prob, &opts).unwrap();
        let n = d.y.len();
        let xd = DMatrix::from_fn(n, 4, |i, j| if j == 0 { 1.0 } else { d.x[(i, j - 1)] });
        let ls = xd.clone().svd(true, true).solve(&DVector::from_column_slice(&d.y), 1e-14).unwrap();
        let rss = (DVector::from_column_slice(&d.y) - &xd * &ls).norm_squared();
        let intercept = fit.alpha + (1.0 - fit.skew.sigma) * fit.skew.m;
        worst_ls = worst_ls.max((intercept - ls[0]).abs());
        for j in 0..3 {
            worst_ls = worst_ls.max((fit.beta[j] - ls[j + 1]).abs());
        }
        worst_ls = worst_ls.max((fit.skew.sigma - (rss / n as f64).sqrt()).abs());
    }

    // λ = 0: the two-part fit separates into logistic and pivot-blend fits
    let mut worst_sep: f64 = 0.0;
    let mut tp = TwoPartSimSpec::benchmark(400, 4, 2).unwrap();
    tp.base = "huber:1.345".parse().unwrap();
    for k in 0..5 {
        let (x, y) = simulate_two_part(&tp, &mut stream_rng(910, k)).unwrap();
        let config = TwoPartConfig {
            base: tp.base,
            ..TwoPartConfig::default()
        };
        let prob = TwoPartProblem::new(x.clone(), y.clone(), config).unwrap();
        let fit = s2_fit(&prob, 0.0, &TwoPartOptions::default()).unwrap();
        let z: Vec<f64> = y.iter().map(|&v| if v == 0.0 { 1.0 } else { 0.0 }).collect();
        let w = irls(&x, &z);
        worst_sep = worst_sep.max((fit.params.b0 - w[0]).abs());
        for j in 0..4 {
            worst_sep = worst_sep.max((fit.params.b[j] - w[j + 1]).abs());
        }
        let pos: Vec<usize> = (0..y.len()).filter(|&i| y[i] > 0.0).collect();
        let xp = DMatrix::from_fn(pos.len(), 4, |i, j| x[(pos[i], j)]);
        let yp: Vec<f64> = pos.iter().map(|&i| y[i].ln()).collect();
        let sp = speus_fit(&SpeusProblem::new(xp, yp, tp.base).unwrap(), &FitOptions::default()).unwrap();
        for j in 0..4 {
            worst_sep = worst_sep.max((fit.params.beta[j] - sp.beta[j]).abs());
        }
        worst_sep = worst_sep
            .max((fit.params.alpha - sp.alpha).abs())
            .max((fit.skew.m - sp.skew.m).abs())
            .max((fit.skew.sigma - sp.skew.sigma).abs())
            .max((fit.skew.nu - sp.skew.nu).abs());
    }

    // equal unit scales: the rank criterion is the pairwise absolute spread
    let mut rng = stream_rng(911, 0);
    let normal = RNormal::new(0.0, 2.0).unwrap();
    let mut rank_exact = true;
    for n in 2..=10 {
        for _ in 0..20 {
            let r: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
            let mut brute = 0.0;
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        brute += (r[i] - r[j]).abs();
                    }
                }
            }
            let m = rng.random_range(0.05..3.0);
            rank_exact &= rank_criterion(&r, &SkewSpec::new(m, 1.0, 1.0).unwrap()).unwrap() == brute;
        }
    }
    let pass = worst_ls < 1e-6 && worst_sep < 1e-4 && rank_exact;
    report(
        9,
        "reduction identities",
        pass,
        &format!(
            "equal scales vs least squares {worst_ls:.1e} (< 1e-6), lambda=0 vs separate fits {worst_sep:.1e} (< 1e-4), rank criterion exact: {rank_exact}"
        ),
    );
    assert!(pass);
}
