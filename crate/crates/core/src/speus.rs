//! Joint maximum likelihood for skewed regression `y - Xβ - α ~ SP(φ; σ, ν, m)`.
//!
//! Scales are optimized on the log scale (`σ = e^s`, `ν = e^t`) so the solver
//! stays unconstrained. The criterion is
//!
//! ```text
//! n·log Z + Σ ρ(u_i) + (τ_s/2)(σ⁻² + ν⁻²) + (τ_p/2)m²
//! u_i = (r_i - m)/σ + m  if r_i ≤ m,   (r_i - m)/ν + m  otherwise
//! ```
//!
//! with `Z = σΦ(m) + ν(1 - Φ(m))`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::density::{BaseDensity, SkewSpec};
use crate::error::{Error, Result};
use crate::linalg;
use crate::numeric;
use crate::optim::{self, BfgsOptions, Termination};

/// Smallest scale reported by a fit.
pub const SCALE_FLOOR: f64 = 1e-10;

/// A skewed regression problem.
#[derive(Debug, Clone)]
pub struct SpeusProblem {
    x: DMatrix<f64>,
    y: Vec<f64>,
    pub base: BaseDensity,
    pub include_intercept: bool,
    pub tau_scale: f64,
    pub tau_pivot: f64,
    /// Calibration constant for the normalizer in the bounded-loss criterion.
    pub chi0: f64,
}

impl SpeusProblem {
    /// Builds a problem with an intercept and the default penalties `1e-4·n`.
    pub fn new(x: DMatrix<f64>, y: Vec<f64>, base: BaseDensity) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::EmptyInput("response has no rows".into()));
        }
        if x.nrows() != y.len() {
            return Err(Error::Dimension(format!(
                "design has {} rows but response has {}",
                x.nrows(),
                y.len()
            )));
        }
        if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("data contain non-finite values".into()));
        }
        let n = y.len() as f64;
        Ok(SpeusProblem {
            x,
            y,
            base,
            include_intercept: true,
            tau_scale: 1e-4 * n,
            tau_pivot: 1e-4 * n,
            chi0: 1.0,
        })
    }

    pub fn with_intercept(mut self, yes: bool) -> Self {
        self.include_intercept = yes;
        self
    }

    pub fn with_penalties(mut self, tau_scale: f64, tau_pivot: f64) -> Result<Self> {
        if !(tau_scale >= 0.0 && tau_pivot >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "penalty weights must be nonnegative, got {tau_scale} and {tau_pivot}"
            )));
        }
        self.tau_scale = tau_scale;
        self.tau_pivot = tau_pivot;
        Ok(self)
    }

    pub fn with_chi0(mut self, chi0: f64) -> Result<Self> {
        if !(chi0 > 0.0 && chi0.is_finite()) {
            return Err(Error::InvalidParameter(format!("chi0 must be positive, got {chi0}")));
        }
        self.chi0 = chi0;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn residuals(&self, beta: &[f64], alpha: f64) -> Vec<f64> {
        linalg::residuals(&self.x, &self.y, beta, alpha)
    }

    /// Criterion value; `+∞` when a residual falls outside the base support.
    pub fn objective(&self, beta: &[f64], alpha: f64, s: f64, t: f64, m: f64) -> f64 {
        let r = self.residuals(beta, alpha);
        self.objective_from_residuals(&r, s, t, m)
    }

    fn objective_from_residuals(&self, r: &[f64], s: f64, t: f64, m: f64) -> f64 {
        let (sigma, nu) = (s.exp(), t.exp());
        let q = self.base.cdf(m);
        let z = sigma * q + nu * (1.0 - q);
        let mut total = self.n() as f64 * z.ln();
        for &ri in r {
            let u = if ri <= m {
                (ri - m) / sigma + m
            } else {
                (ri - m) / nu + m
            };
            total += self.base.loss(u);
        }
        total += 0.5 * self.tau_scale * ((-2.0 * s).exp() + (-2.0 * t).exp());
        total += 0.5 * self.tau_pivot * m * m;
        if total.is_nan() {
            f64::INFINITY
        } else {
            total
        }
    }

    /// Analytic gradient in the order `(β, α, s, t, m)`. Residuals tied with
    /// `m` use the left branch.
    pub fn gradient(&self, beta: &[f64], alpha: f64, s: f64, t: f64, m: f64) -> Vec<f64> {
        self.objective_and_gradient(beta, alpha, s, t, m).1
    }

    pub fn objective_and_gradient(
        &self,
        beta: &[f64],
        alpha: f64,
        s: f64,
        t: f64,
        m: f64,
    ) -> (f64, Vec<f64>) {
        let n = self.n();
        let p = self.p();
        let r = self.residuals(beta, alpha);
        let (sigma, nu) = (s.exp(), t.exp());
        let q = self.base.cdf(m);
        let z = sigma * q + nu * (1.0 - q);
        let nf = n as f64;

        let mut f = nf * z.ln();
        let mut dr = DVector::zeros(n);
        let mut gs = nf * sigma * q / z;
        let mut gt = nf * nu * (1.0 - q) / z;
        let mut gm = nf * (sigma - nu) * self.base.pdf(m) / z;
        for (i, &ri) in r.iter().enumerate() {
            let left = ri <= m;
            let scale = if left { sigma } else { nu };
            let u = (ri - m) / scale + m;
            f += self.base.loss(u);
            let d = self.base.loss_deriv(u);
            dr[i] = d / scale;
            gm += d * (1.0 - 1.0 / scale);
            if left {
                gs -= d * (ri - m) / sigma;
            } else {
                gt -= d * (ri - m) / nu;
            }
        }
        f += 0.5 * self.tau_scale * ((-2.0 * s).exp() + (-2.0 * t).exp());
        f += 0.5 * self.tau_pivot * m * m;
        gs -= self.tau_scale * (-2.0 * s).exp();
        gt -= self.tau_scale * (-2.0 * t).exp();
        gm += self.tau_pivot * m;

        let gb = -(self.x.tr_mul(&dr));
        let mut g = Vec::with_capacity(p + 4);
        g.extend(gb.iter());
        g.push(-dr.sum());
        g.extend([gs, gt, gm]);
        if f.is_nan() {
            f = f64::INFINITY;
        }
        (f, g)
    }

    /// Bounded-loss criterion `Σ ρ_b(u_i) + nχ₀ log Z` with `Z` built from
    /// the problem's base CDF. Scales are fixed.
    pub fn bounded_objective(
        &self,
        loss: &BoundedLoss,
        beta: &[f64],
        alpha: f64,
        m: f64,
        scales: (f64, f64),
    ) -> f64 {
        self.bounded_objective_and_gradient(loss, beta, alpha, m, scales).0
    }

    /// Objective and gradient in the order `(β, α, m)`.
    pub fn bounded_objective_and_gradient(
        &self,
        loss: &BoundedLoss,
        beta: &[f64],
        alpha: f64,
        m: f64,
        (sigma, nu): (f64, f64),
    ) -> (f64, Vec<f64>) {
        let n = self.n();
        let r = self.residuals(beta, alpha);
        let q = self.base.cdf(m);
        let z = sigma * q + nu * (1.0 - q);
        let nf = n as f64;
        let mut f = nf * self.chi0 * z.ln();
        let mut gm = nf * self.chi0 * (sigma - nu) * self.base.pdf(m) / z;
        let mut dr = DVector::zeros(n);
        for (i, &ri) in r.iter().enumerate() {
            let scale = if ri <= m { sigma } else { nu };
            let u = (ri - m) / scale + m;
            f += loss.rho(u);
            let d = loss.psi(u);
            dr[i] = d / scale;
            gm += d * (1.0 - 1.0 / scale);
        }
        let gb = -(self.x.tr_mul(&dr));
        let mut g: Vec<f64> = gb.iter().copied().collect();
        g.push(-dr.sum());
        g.push(gm);
        (f, g)
    }
}

/// Redescending losses for the bounded-loss criterion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundedLoss {
    /// Tukey bisquare with tuning constant `c` (4.685 is the usual choice).
    Tukey { c: f64 },
    /// Hampel three-part redescender with `0 < a ≤ b < c`.
    Hampel { a: f64, b: f64, c: f64 },
}

impl BoundedLoss {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BoundedLoss::Tukey { c } if c > 0.0 && c.is_finite() => Ok(()),
            BoundedLoss::Hampel { a, b, c } if a > 0.0 && a <= b && b < c && c.is_finite() => {
                Ok(())
            }
            other => Err(Error::Config(format!("invalid bounded loss {other:?}"))),
        }
    }

    pub fn rho(&self, u: f64) -> f64 {
        match *self {
            BoundedLoss::Tukey { c } => {
                let c2 = c * c / 6.0;
                if u.abs() >= c {
                    c2
                } else {
                    let w = 1.0 - (u / c).powi(2);
                    c2 * (1.0 - w * w * w)
                }
            }
            BoundedLoss::Hampel { a, b, c } => {
                let x = u.abs();
                let at_b = a * b - 0.5 * a * a;
                if x <= a {
                    0.5 * u * u
                } else if x <= b {
                    a * x - 0.5 * a * a
                } else if x <= c {
                    at_b + a * (c * (x - b) - 0.5 * (x * x - b * b)) / (c - b)
                } else {
                    at_b + 0.5 * a * (c - b)
                }
            }
        }
    }

    pub fn psi(&self, u: f64) -> f64 {
        match *self {
            BoundedLoss::Tukey { c } => {
                if u.abs() >= c {
                    0.0
                } else {
                    let w = 1.0 - (u / c).powi(2);
                    u * w * w
                }
            }
            BoundedLoss::Hampel { a, b, c } => {
                let x = u.abs();
                let sign = u.signum();
                if x <= a {
                    u
                } else if x <= b {
                    a * sign
                } else if x <= c {
                    a * sign * (c - x) / (c - b)
                } else {
                    0.0
                }
            }
        }
    }
}

/// Optimizer and start settings for [`speus_fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub obj_tol: f64,
    /// Residual quantiles used as pivot starts; `m = 0` is always added.
    pub m_grid_quantiles: Vec<f64>,
    /// Overrides the problem's `τ_s` when set.
    pub tau_scale: Option<f64>,
    /// Overrides the problem's `τ_p` when set.
    pub tau_pivot: Option<f64>,
    /// Unused by the deterministic fit; carried for provenance.
    pub seed: u64,
    /// Pins the pivot.
    pub m_fixed: Option<f64>,
    /// Constrains `σ = ν`.
    pub equal_scales: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iter: 500,
            grad_tol: 1e-6,
            obj_tol: 1e-10,
            m_grid_quantiles: (1..=9).map(|k| k as f64 / 10.0).collect(),
            tau_scale: None,
            tau_pivot: None,
            seed: 0,
            m_fixed: None,
            equal_scales: false,
        }
    }
}

impl FitOptions {
    fn bfgs(&self) -> BfgsOptions {
        BfgsOptions {
            max_iter: self.max_iter,
            grad_tol: self.grad_tol,
            obj_tol: self.obj_tol,
            ..BfgsOptions::default()
        }
    }
}

/// A starting point `(β, α, s, t, m)` with a label for reporting.
#[derive(Debug, Clone)]
pub struct Start {
    pub label: String,
    pub beta: Vec<f64>,
    pub alpha: f64,
    pub s: f64,
    pub t: f64,
    pub m: f64,
}

/// Fitted skewed regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpFit {
    pub base: BaseDensity,
    pub beta: Vec<f64>,
    pub alpha: f64,
    pub skew: SkewSpec,
    /// Criterion without the penalty terms.
    pub neg_loglik: f64,
    /// Penalized criterion that was minimized.
    pub objective: f64,
    pub converged: bool,
    pub termination: Termination,
    pub n_iter: usize,
    pub grad_norm: f64,
    pub init_used: String,
    pub n_obs: usize,
    /// Smallest and largest fitted residual `y - Xβ - α`.
    pub residual_range: (f64, f64),
    pub objective_trace: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Which parameters are free and how they map into `(β, α, s, t, m)`.
#[derive(Debug, Clone, Copy)]
struct Layout {
    p: usize,
    alpha: bool,
    scales: ScaleMode,
    m: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ScaleMode {
    Free,
    Tied,
}

impl Layout {
    fn pack(&self, full: &[f64]) -> Vec<f64> {
        let p = self.p;
        let mut z = full[..p].to_vec();
        if self.alpha {
            z.push(full[p]);
        }
        match self.scales {
            ScaleMode::Free => z.extend([full[p + 1], full[p + 2]]),
            ScaleMode::Tied => z.push(full[p + 1]),
        }
        if self.m {
            z.push(full[p + 3]);
        }
        z
    }

    /// Fills the free slots of `full` from `z`.
    fn unpack(&self, z: &[f64], full: &mut [f64]) {
        let p = self.p;
        full[..p].copy_from_slice(&z[..p]);
        let mut k = p;
        if self.alpha {
            full[p] = z[k];
            k += 1;
        }
        match self.scales {
            ScaleMode::Free => {
                full[p + 1] = z[k];
                full[p + 2] = z[k + 1];
                k += 2;
            }
            ScaleMode::Tied => {
                full[p + 1] = z[k];
                full[p + 2] = z[k];
                k += 1;
            }
        }
        if self.m {
            full[p + 3] = z[k];
        }
    }

    fn reduce_grad(&self, g: &[f64]) -> Vec<f64> {
        let p = self.p;
        let mut out = g[..p].to_vec();
        if self.alpha {
            out.push(g[p]);
        }
        match self.scales {
            ScaleMode::Free => out.extend([g[p + 1], g[p + 2]]),
            ScaleMode::Tied => out.push(g[p + 1] + g[p + 2]),
        }
        if self.m {
            out.push(g[p + 3]);
        }
        out
    }
}

/// Moment-matched start: OLS slopes, base mean/sd matched to the residuals.
struct Anchor {
    beta: Vec<f64>,
    /// Residuals with the OLS slopes but no intercept.
    r0: Vec<f64>,
    s0: f64,
    alpha_prime: f64,
    degenerate: bool,
}

fn anchor(prob: &SpeusProblem, robust: bool) -> Result<Anchor> {
    let (beta, _) = if robust {
        linalg::lad(&prob.x, &prob.y, prob.include_intercept)?
    } else {
        linalg::ols(&prob.x, &prob.y, prob.include_intercept)?
    };
    let r0 = prob.residuals(&beta, 0.0);
    let spread = numeric::std_dev(&r0);
    let base = &prob.base;
    let mut s0 = spread / base.std_dev();
    let degenerate = !(s0 > SCALE_FLOOR * (1.0 + numeric::mean(&r0).abs()));
    if degenerate {
        s0 = if prob.tau_scale > 0.0 {
            (prob.tau_scale / prob.n() as f64).sqrt()
        } else {
            SCALE_FLOOR
        };
    }
    let mut alpha_prime = numeric::mean(&r0) - s0 * base.mean();
    let (lo, _) = base.support();
    if lo.is_finite() {
        // every standardized residual must sit strictly inside the support
        let min_r = r0.iter().copied().fold(f64::INFINITY, f64::min);
        let limit = min_r - s0 * lo - 1e-3 * s0 * base.std_dev();
        alpha_prime = alpha_prime.min(limit);
    }
    Ok(Anchor {
        beta,
        r0,
        s0,
        alpha_prime,
        degenerate,
    })
}

fn pivot_starts(prob: &SpeusProblem, a: &Anchor, opts: &FitOptions) -> Vec<Start> {
    let s = a.s0.ln();
    let make = |label: String, m: f64| {
        let alpha = if prob.include_intercept {
            a.alpha_prime - (1.0 - a.s0) * m
        } else {
            0.0
        };
        Start {
            label,
            beta: a.beta.clone(),
            alpha,
            s,
            t: s,
            m,
        }
    };
    if let Some(m) = opts.m_fixed {
        return vec![make(format!("fixed m={m}"), m)];
    }
    let mut sorted = a.r0.clone();
    sorted.sort_by(f64::total_cmp);
    let mut starts: Vec<Start> = opts
        .m_grid_quantiles
        .iter()
        .map(|&k| {
            let target = numeric::quantile_sorted(&sorted, k);
            let m = if prob.include_intercept {
                (target - a.alpha_prime) / a.s0
            } else {
                target
            };
            make(format!("residual quantile {k}"), m)
        })
        .collect();
    starts.push(make("m=0".into(), 0.0));
    if !opts.equal_scales && !a.degenerate {
        for &k in &opts.m_grid_quantiles {
            if let Some(st) = skewed_start(prob, a, &sorted, k) {
                starts.push(st);
            }
        }
    }
    starts
}

/// Start with the pivot placed at residual quantile `k` and unequal scales
/// matched to the mean distance of each side from it. The base pivot solves
/// the mass-split condition `qσ / (qσ + (1-q)ν) = k`; a few fixed-point
/// rounds reconcile it with the scales.
fn skewed_start(prob: &SpeusProblem, a: &Anchor, sorted: &[f64], k: f64) -> Option<Start> {
    let base = &prob.base;
    let c = numeric::quantile_sorted(sorted, k);
    let (left, right): (Vec<f64>, Vec<f64>) = sorted.iter().partition(|&&r| r <= c);
    if left.len() < 2 || right.len() < 2 {
        return None;
    }
    let dl = c - numeric::mean(&left);
    let dr = numeric::mean(&right) - c;
    let (lo, _) = base.support();
    let r_min = sorted[0];
    let mut m = if prob.include_intercept { base.quantile(k) } else { c };
    let (mut sigma, mut nu) = (a.s0, a.s0);
    for _ in 0..6 {
        let (el, er) = base.conditional_means(m).ok()?;
        let (el, er) = (m - el, er - m);
        if !(el > 0.0 && er > 0.0) {
            return None;
        }
        sigma = dl / el;
        nu = dr / er;
        if !prob.include_intercept {
            break;
        }
        let q = k * nu / (k * nu + (1.0 - k) * sigma);
        m = base.quantile(q);
        if !m.is_finite() {
            return None;
        }
    }
    if lo.is_finite() {
        if m <= lo {
            return None;
        }
        // keep the lowest residual strictly inside the support
        sigma = sigma.max((c - r_min) / (m - lo) * (1.0 + 1e-3));
    }
    if !(sigma > 0.0 && nu > 0.0 && sigma.is_finite() && nu.is_finite()) {
        return None;
    }
    let alpha = if prob.include_intercept { c - m } else { 0.0 };
    Some(Start {
        label: format!("skewed start at residual quantile {k}"),
        beta: a.beta.clone(),
        alpha,
        s: sigma.ln(),
        t: nu.ln(),
        m,
    })
}

fn effective_problem(prob: &SpeusProblem, opts: &FitOptions) -> SpeusProblem {
    let mut p = prob.clone();
    if let Some(v) = opts.tau_scale {
        p.tau_scale = v;
    }
    if let Some(v) = opts.tau_pivot {
        p.tau_pivot = v;
    }
    p
}

/// Fits by BFGS from a grid of pivot starts and keeps the best optimum.
pub fn speus_fit(prob: &SpeusProblem, opts: &FitOptions) -> Result<SpFit> {
    let prob = effective_problem(prob, opts);
    let a = anchor(&prob, false)?;
    let starts = pivot_starts(&prob, &a, opts);
    let mut fit = speus_fit_from(&prob, &starts, opts)?;
    if a.degenerate {
        fit.warnings.push(
            "residual spread is zero: degenerate fit, scales are driven by the penalty or floor"
                .into(),
        );
    }
    Ok(fit)
}

/// Runs BFGS from each supplied start and returns the lowest optimum.
pub fn speus_fit_from(prob: &SpeusProblem, starts: &[Start], opts: &FitOptions) -> Result<SpFit> {
    let p = prob.p();
    let profile = prob.include_intercept && prob.base.loss_nondecreasing();
    let layout = Layout {
        p,
        alpha: prob.include_intercept && !profile,
        scales: if opts.equal_scales {
            ScaleMode::Tied
        } else {
            ScaleMode::Free
        },
        m: opts.m_fixed.is_none(),
    };
    let bfgs = opts.bfgs();
    let mut traces = Vec::new();
    let mut best: Option<(optim::BfgsResult, Vec<f64>, String)> = None;

    for start in starts {
        let mut full: Vec<f64> = start.beta.clone();
        let t = if opts.equal_scales { start.s } else { start.t };
        full.extend([start.alpha, start.s, t, opts.m_fixed.unwrap_or(start.m)]);
        let template = full.clone();
        let fg = |z: &[f64]| {
            let mut th = template.clone();
            layout.unpack(z, &mut th);
            let edge = profile.then(|| profile_alpha(prob, &mut th));
            let (f, mut g) =
                prob.objective_and_gradient(&th[..p], th[p], th[p + 1], th[p + 2], th[p + 3]);
            if let Some(e) = edge {
                let ga = g[p];
                for j in 0..p {
                    g[j] -= ga * prob.x[(e.row, j)];
                }
                g[p + 1] += ga * e.ds;
                g[p + 2] += ga * e.dt;
                g[p + 3] += ga * e.dm;
            }
            (f, layout.reduce_grad(&g))
        };
        match optim::minimize(fg, &layout.pack(&full), &bfgs) {
            Ok(res) => {
                traces.push(format!(
                    "{}: f={:.6} after {} iterations ({:?})",
                    start.label, res.f, res.n_iter, res.termination
                ));
                let better = match &best {
                    None => true,
                    Some((b, _, _)) => res.f < b.f,
                };
                if better {
                    let mut th = template.clone();
                    layout.unpack(&res.x, &mut th);
                    if profile {
                        profile_alpha(prob, &mut th);
                    }
                    best = Some((res, th, start.label.clone()));
                }
            }
            Err(e) => traces.push(format!("{}: {e}", start.label)),
        }
    }

    let Some((res, th, label)) = best else {
        return Err(Error::Optimization { traces });
    };
    Ok(assemble(prob, &th, &res, label))
}

/// Derivatives of the profiled intercept and the row that sits on the edge.
struct Edge {
    row: usize,
    ds: f64,
    dt: f64,
    dm: f64,
}

/// Sets `α` so the smallest residual maps onto the lower support edge (up to
/// a tiny slack), which is optimal when the loss is nondecreasing.
fn profile_alpha(prob: &SpeusProblem, th: &mut [f64]) -> Edge {
    let p = prob.p();
    let r0 = prob.residuals(&th[..p], 0.0);
    let (row, r_min) = r0
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap_or((0, 0.0));
    let (sigma, nu, m) = (th[p + 1].exp(), th[p + 2].exp(), th[p + 3]);
    let lo = prob.base.support().0;
    let slack = 1e-10 * (1.0 + r_min.abs());
    // residual value that maps onto `lo`
    let (edge, ds, dt, dm) = if lo <= m {
        (m + sigma * (lo - m), -sigma * (lo - m), 0.0, -(1.0 - sigma))
    } else {
        (m + nu * (lo - m), 0.0, -nu * (lo - m), -(1.0 - nu))
    };
    th[p] = r_min - edge - slack;
    Edge { row, ds, dt, dm }
}

fn assemble(prob: &SpeusProblem, th: &[f64], res: &optim::BfgsResult, label: String) -> SpFit {
    let p = prob.p();
    let beta = th[..p].to_vec();
    let alpha = th[p];
    let (s, t, m) = (th[p + 1], th[p + 2], th[p + 3]);
    let sigma = s.exp().max(SCALE_FLOOR);
    let nu = t.exp().max(SCALE_FLOOR);
    let mut warnings = Vec::new();
    if sigma == SCALE_FLOOR || nu == SCALE_FLOOR {
        warnings.push("a fitted scale hit the floor 1e-10".into());
    }
    if prob.n() < p + 3 {
        warnings.push(format!(
            "only {} observations for {} coefficients plus pivot and scales",
            prob.n(),
            p
        ));
    }
    if !res.converged() {
        warnings.push(format!("optimizer stopped at the iteration cap ({})", res.n_iter));
    }
    let r = prob.residuals(&beta, alpha);
    let lo = r.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m < lo || m > hi {
        warnings.push("pivot lies outside the residual range; the fit is a location-scale model".into());
    }
    let penalty = 0.5 * prob.tau_scale * ((-2.0 * s).exp() + (-2.0 * t).exp())
        + 0.5 * prob.tau_pivot * m * m;
    SpFit {
        base: prob.base,
        beta,
        alpha,
        skew: SkewSpec { m, sigma, nu },
        neg_loglik: res.f - penalty,
        objective: res.f,
        converged: res.converged(),
        termination: res.termination,
        n_iter: res.n_iter,
        grad_norm: res.grad_norm(),
        init_used: label,
        n_obs: prob.n(),
        residual_range: (lo, hi),
        objective_trace: res.trace.clone(),
        warnings,
    }
}

/// Minimizes the bounded-loss criterion over `(β, α, m)` with the scales held
/// at the caller's values.
pub fn speus_fit_bounded(
    prob: &SpeusProblem,
    loss: &BoundedLoss,
    scales: SkewSpec,
    opts: &FitOptions,
) -> Result<SpFit> {
    loss.validate()?;
    let (sigma, nu) = (scales.sigma, scales.nu);
    let p = prob.p();
    let a = anchor(prob, true)?;
    // center the pivot grid on the robust start with the supplied scales
    let alpha_prime = numeric::quantile(&a.r0, 0.5);
    let mut sorted = a.r0.clone();
    sorted.sort_by(f64::total_cmp);
    let mut ms: Vec<(String, f64)> = match opts.m_fixed {
        Some(m) => vec![(format!("fixed m={m}"), m)],
        None => opts
            .m_grid_quantiles
            .iter()
            .map(|&k| {
                let target = numeric::quantile_sorted(&sorted, k);
                let m = if prob.include_intercept { target - alpha_prime } else { target };
                (format!("residual quantile {k}"), m)
            })
            .collect(),
    };
    if opts.m_fixed.is_none() {
        ms.push(("m=0".into(), 0.0));
    }

    let free_m = opts.m_fixed.is_none();
    let bfgs = opts.bfgs();
    let mut traces = Vec::new();
    let mut best: Option<(optim::BfgsResult, Vec<f64>, String)> = None;
    for (label, m0) in ms {
        let alpha0 = if prob.include_intercept { alpha_prime } else { 0.0 };
        // full = (β, α, m)
        let mut full = a.beta.clone();
        full.extend([alpha0, m0]);
        let pack = |full: &[f64]| {
            let mut z = full[..p].to_vec();
            if prob.include_intercept {
                z.push(full[p]);
            }
            if free_m {
                z.push(full[p + 1]);
            }
            z
        };
        let unpack = |z: &[f64], base: &[f64]| {
            let mut th = base.to_vec();
            th[..p].copy_from_slice(&z[..p]);
            let mut k = p;
            if prob.include_intercept {
                th[p] = z[k];
                k += 1;
            }
            if free_m {
                th[p + 1] = z[k];
            }
            th
        };
        let fg = |z: &[f64]| {
            let th = unpack(z, &full);
            let (f, g) = prob.bounded_objective_and_gradient(loss, &th[..p], th[p], th[p + 1], (sigma, nu));
            let mut out = g[..p].to_vec();
            if prob.include_intercept {
                out.push(g[p]);
            }
            if free_m {
                out.push(g[p + 1]);
            }
            (f, out)
        };
        match optim::minimize(fg, &pack(&full), &bfgs) {
            Ok(res) => {
                traces.push(format!("{label}: f={:.6} ({:?})", res.f, res.termination));
                if best.as_ref().map_or(true, |(b, _, _)| res.f < b.f) {
                    let th = unpack(&res.x, &full);
                    best = Some((res, th, label));
                }
            }
            Err(e) => traces.push(format!("{label}: {e}")),
        }
    }
    let Some((res, th, label)) = best else {
        return Err(Error::Optimization { traces });
    };
    let full = {
        let mut v = th[..p].to_vec();
        v.extend([th[p], sigma.ln(), nu.ln(), th[p + 1]]);
        v
    };
    let mut fit = assemble(prob, &full, &res, label);
    fit.neg_loglik = res.f;
    fit.skew = SkewSpec {
        m: th[p + 1],
        sigma,
        nu,
    };
    Ok(fit)
}

/// Pairwise skewed criterion on absolute residual differences with an
/// exponential base. The indicators are evaluated exactly as written.
pub fn rank_criterion(residuals: &[f64], skew: &SkewSpec) -> Result<f64> {
    let n = residuals.len();
    if n < 2 {
        return Err(Error::EmptyInput("rank criterion needs at least two residuals".into()));
    }
    let SkewSpec { m, sigma, nu } = *skew;
    if !(m > 0.0) {
        return Err(Error::Domain(format!("rank criterion requires m > 0, got {m}")));
    }
    let lower = m * (1.0 - sigma);
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = (residuals[i] - residuals[j]).abs();
            // d/s + m(1 - 1/s) is exact at s = 1
            if d > m {
                total += d / nu + m * (1.0 - 1.0 / nu);
            } else if d >= lower {
                total += d / sigma + m * (1.0 - 1.0 / sigma);
            }
        }
    }
    let pairs = (n * (n - 1)) as f64;
    let e = (-m).exp();
    Ok(total + pairs * (sigma * (1.0 - e) + nu * e).ln())
}

/// Result of folding the pivot into the intercept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PivotAbsorption {
    pub alpha_prime: f64,
    pub absorbable: bool,
}

/// With equal scales (or a pivot outside the residual range) the pivot and
/// intercept collapse to `α' = α + (1 - σ)m`.
pub fn absorb_pivot(fit: &SpFit) -> PivotAbsorption {
    let SkewSpec { m, sigma, nu } = fit.skew;
    let equal = (sigma - nu).abs() / sigma.max(nu) < 1e-8;
    let (lo, hi) = fit.residual_range;
    let outside = m < lo || m > hi;
    if equal || outside {
        let scale = if equal || m < lo { nu } else { sigma };
        PivotAbsorption {
            alpha_prime: fit.alpha + (1.0 - scale) * m,
            absorbable: true,
        }
    } else {
        PivotAbsorption {
            alpha_prime: fit.alpha,
            absorbable: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::SpDistribution;

    fn toy(n: usize, seed: u64) -> SpeusProblem {
        let x = DMatrix::from_fn(n, 2, |i, j| ((i * 7 + j * 3) % 11) as f64 / 5.0 - 1.0);
        let dist = SpDistribution::new(BaseDensity::gaussian(), SkewSpec::new(0.3, 0.5, 1.5).unwrap());
        let eps = dist.sample(n, seed);
        let y = (0..n)
            .map(|i| 1.0 + 2.0 * x[(i, 0)] - x[(i, 1)] + eps[i])
            .collect();
        SpeusProblem::new(x, y, BaseDensity::gaussian()).unwrap()
    }

    #[test]
    fn gaussian_nll_reduction() {
        let y = vec![0.3, -1.2, 0.8, 2.0];
        let x = DMatrix::zeros(4, 1);
        let prob = SpeusProblem::new(x, y.clone(), BaseDensity::gaussian()).unwrap();
        let f = prob.objective(&[0.0], 0.0, 0.0, 0.0, 0.0);
        let expect = y.iter().map(|v| v * v / 2.0).sum::<f64>()
            + 4.0 * numeric::LN_SQRT_2PI
            + prob.tau_scale;
        assert!((f - expect).abs() < 1e-12);
    }

    #[test]
    fn objective_continuous_across_residuals() {
        let prob = toy(40, 1);
        let r = prob.residuals(&[2.0, -1.0], 1.0);
        let m = r[5];
        let a = prob.objective(&[2.0, -1.0], 1.0, -0.3, 0.2, m - 1e-9);
        let b = prob.objective(&[2.0, -1.0], 1.0, -0.3, 0.2, m + 1e-9);
        assert!((a - b).abs() < 1e-6);
    }

    #[test]
    fn gradient_matches_differences() {
        let prob = toy(30, 2);
        let th = [1.9, -0.8, 0.9, -0.5, 0.3, 0.2];
        let g = prob.gradient(&th[..2], th[2], th[3], th[4], th[5]);
        let f = |v: &[f64]| prob.objective(&v[..2], v[2], v[3], v[4], v[5]);
        for k in 0..6 {
            let h = 1e-6 * (1.0 + th[k].abs());
            let mut a = th;
            let mut b = th;
            a[k] += h;
            b[k] -= h;
            let fd = (f(&a) - f(&b)) / (2.0 * h);
            assert!((fd - g[k]).abs() <= 1e-5 * g[k].abs().max(1.0), "{k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn fit_recovers_toy_truth() {
        let prob = toy(400, 3);
        let fit = speus_fit(&prob, &FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert!((fit.beta[0] - 2.0).abs() < 0.2 && (fit.beta[1] + 1.0).abs() < 0.2, "{:?}", fit.beta);
        assert!(fit.objective_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn noiseless_data_interpolates() {
        let x = DMatrix::from_fn(20, 2, |i, j| ((i + 1) * (j + 2)) as f64 % 7.0 - 3.0);
        let y: Vec<f64> = (0..20).map(|i| 0.5 + 1.5 * x[(i, 0)] - 2.0 * x[(i, 1)]).collect();
        let prob = SpeusProblem::new(x, y, BaseDensity::gaussian()).unwrap();
        let fit = speus_fit(&prob, &FitOptions::default()).unwrap();
        assert!((fit.beta[0] - 1.5).abs() < 1e-6 && (fit.beta[1] + 2.0).abs() < 1e-6);
        assert!(fit.warnings.iter().any(|w| w.contains("degenerate")));
    }

    #[test]
    fn fixed_pivot_is_respected() {
        let prob = toy(100, 4);
        let opts = FitOptions {
            m_fixed: Some(0.0),
            ..FitOptions::default()
        };
        let fit = speus_fit(&prob, &opts).unwrap();
        assert_eq!(fit.skew.m, 0.0);
        assert_eq!(fit.init_used, "fixed m=0");
    }

    #[test]
    fn tukey_and_hampel_are_bounded_and_consistent() {
        let t = BoundedLoss::Tukey { c: 4.685 };
        let h = BoundedLoss::Hampel { a: 1.5, b: 3.5, c: 8.0 };
        for loss in [t, h] {
            loss.validate().unwrap();
            for &u in &[-9.0, -5.0, -2.0, -0.3, 0.4, 1.7, 3.0, 6.0, 12.0] {
                let e = 1e-6;
                let fd = (loss.rho(u + e) - loss.rho(u - e)) / (2.0 * e);
                assert!((fd - loss.psi(u)).abs() < 1e-6, "{loss:?} at {u}");
            }
            assert_eq!(loss.rho(100.0), loss.rho(-1000.0));
        }
        assert!(BoundedLoss::Tukey { c: 0.0 }.validate().is_err());
        assert!(BoundedLoss::Hampel { a: 2.0, b: 1.0, c: 3.0 }.validate().is_err());
    }

    #[test]
    fn rank_criterion_equal_scales_is_l1_spread() {
        let r: [f64; 4] = [0.3, -1.1, 2.4, 0.0];
        let skew = SkewSpec::new(0.7, 1.0, 1.0).unwrap();
        let spread: f64 = r
            .iter()
            .flat_map(|a| r.iter().map(move |b| (a - b).abs()))
            .sum();
        assert!((rank_criterion(&r, &skew).unwrap() - spread).abs() < 1e-12);
        assert!(rank_criterion(&r, &SkewSpec::new(0.0, 1.0, 1.0).unwrap()).is_err());
    }

    #[test]
    fn rank_criterion_tied_pair() {
        let skew_small = SkewSpec::new(0.5, 0.5, 2.0).unwrap();
        let skew_big = SkewSpec::new(0.5, 1.5, 2.0).unwrap();
        let r = [1.0, 1.0];
        let norm = |s: &SkewSpec| 2.0 * (s.sigma * (1.0 - (-s.m).exp()) + s.nu * (-s.m).exp()).ln();
        // sigma < 1: zero difference lies below m(1-σ) and contributes nothing
        assert!((rank_criterion(&r, &skew_small).unwrap() - norm(&skew_small)).abs() < 1e-14);
        // sigma > 1: each ordered pair adds (0 - m)/σ + m
        let add = 2.0 * (-0.5 / 1.5 + 0.5);
        assert!((rank_criterion(&r, &skew_big).unwrap() - norm(&skew_big) - add).abs() < 1e-14);
    }

    #[test]
    fn absorb_pivot_formula() {
        let prob = toy(50, 5);
        let mut fit = speus_fit(&prob, &FitOptions::default()).unwrap();
        fit.alpha = 1.0;
        fit.skew = SkewSpec::new(2.0, 0.5, 0.5).unwrap();
        let a = absorb_pivot(&fit);
        assert!(a.absorbable);
        assert!((a.alpha_prime - 2.0).abs() < 1e-15);
        fit.skew = SkewSpec::new(0.5 * (fit.residual_range.0 + fit.residual_range.1), 0.3, 0.9).unwrap();
        assert!(!absorb_pivot(&fit).absorbable);
    }
}
