//! Sparse skewed two-part models for semicontinuous responses.
//!
//! Zeros go to a logistic part, positives (after a transform) to a
//! pivot-blend regression, and a row-wise (2,1) penalty on
//! `B = [c ⊙ β, e ⊙ b]` selects predictors jointly across both parts. The
//! fit majorizes `‖B_j‖₂` by `½(‖B_j‖²/a_j + a_j)` and alternates BFGS over
//! the continuous and binary blocks.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{BaseDensity, SkewSpec, SpDistribution, HUBER_DEFAULT_DELTA};
use crate::error::{Error, Result};
use crate::linalg;
use crate::numeric;
use crate::optim::{self, BfgsOptions};
use crate::speus::{speus_fit, FitOptions, SpeusProblem, SCALE_FLOOR};

/// Transform applied to the positive responses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "lambda", rename_all = "snake_case")]
pub enum Transform {
    Log,
    Identity,
    /// Box-Cox `(y^λ - 1)/λ`; `λ = 0` is the log.
    Power(f64),
}

impl Transform {
    pub fn apply(&self, y: f64) -> f64 {
        match *self {
            Transform::Log => y.ln(),
            Transform::Identity => y,
            Transform::Power(l) if l == 0.0 => y.ln(),
            Transform::Power(l) => (y.powf(l) - 1.0) / l,
        }
    }

    /// Inverse map, `None` outside the image of `(0, ∞)`.
    pub fn invert(&self, t: f64) -> Option<f64> {
        let y = match *self {
            Transform::Log => t.exp(),
            Transform::Identity => t,
            Transform::Power(l) if l == 0.0 => t.exp(),
            Transform::Power(l) => {
                let u = 1.0 + l * t;
                if u <= 0.0 {
                    return None;
                }
                u.powf(1.0 / l)
            }
        };
        (y > 0.0 && y.is_finite()).then_some(y)
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transform::Log => write!(f, "log"),
            Transform::Identity => write!(f, "identity"),
            Transform::Power(l) => write!(f, "power:{l}"),
        }
    }
}

impl FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "log" => Ok(Transform::Log),
            "identity" | "none" => Ok(Transform::Identity),
            _ => {
                let rest = s
                    .strip_prefix("power:")
                    .or_else(|| s.strip_prefix("boxcox:"))
                    .ok_or_else(|| {
                        Error::Config(format!(
                            "unknown transform '{s}' (expected log, identity or power:<lambda>)"
                        ))
                    })?;
                let l: f64 = rest
                    .parse()
                    .map_err(|_| Error::Config(format!("bad Box-Cox exponent '{rest}'")))?;
                if !l.is_finite() {
                    return Err(Error::Config("Box-Cox exponent must be finite".into()));
                }
                Ok(Transform::Power(l))
            }
        }
    }
}

/// How rows of `B` are scaled before taking norms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyScaling {
    /// `B_j = [‖X_j‖ β_j, ‖Z_j‖ b_j]` with centered column norms; makes λ
    /// free of the design size and selection invariant to column rescaling.
    ColumnNorm,
    /// `B_j = [√n β_j, √N b_j]`.
    SampleSize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TwoPartConfig {
    pub transform: Transform,
    pub base: BaseDensity,
    /// Weight of `(τ/2)(σ⁻² + ν⁻² + m²)`; `None` means `1e-4·n`.
    pub tau: Option<f64>,
    pub scaling: PenaltyScaling,
    /// Optional ridge `(r/2)‖β‖²` on the continuous slopes.
    pub beta_ridge: f64,
}

impl Default for TwoPartConfig {
    fn default() -> Self {
        TwoPartConfig {
            transform: Transform::Log,
            base: BaseDensity::huber(HUBER_DEFAULT_DELTA).expect("default delta is valid"),
            tau: None,
            scaling: PenaltyScaling::ColumnNorm,
            beta_ridge: 0.0,
        }
    }
}

/// Data of a two-part problem, partitioned into positives and zeros.
#[derive(Debug, Clone)]
pub struct TwoPartProblem {
    x: DMatrix<f64>,
    y: Vec<f64>,
    /// `1{y_i = 0}` for every row.
    zero: Vec<f64>,
    positives: Vec<usize>,
    cont: SpeusProblem,
    scale_beta: Vec<f64>,
    scale_b: Vec<f64>,
    config: TwoPartConfig,
    pub warnings: Vec<String>,
}

impl TwoPartProblem {
    pub fn new(x: DMatrix<f64>, y: Vec<f64>, config: TwoPartConfig) -> Result<Self> {
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
        if let Some(v) = y.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Domain(format!(
                "two-part responses must be finite and nonnegative, found {v}"
            )));
        }
        let mut warnings = Vec::new();
        let tiny = y.iter().filter(|&&v| v > 0.0 && v < 1e-12).count();
        if tiny > 0 {
            warnings.push(format!(
                "{tiny} positive responses lie below 1e-12; they are kept in the continuous part"
            ));
        }
        let positives: Vec<usize> = (0..y.len()).filter(|&i| y[i] > 0.0).collect();
        let n_zero = y.len() - positives.len();
        if positives.is_empty() {
            return Err(Error::Partition(
                "no positive responses; fit a logistic model instead".into(),
            ));
        }
        if n_zero == 0 {
            return Err(Error::Partition(
                "no zero responses; fit the continuous part alone".into(),
            ));
        }
        let t: Vec<f64> = positives.iter().map(|&i| config.transform.apply(y[i])).collect();
        if let Some(v) = t.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("transformed response is not finite ({v})")));
        }
        let xp = linalg::select_rows(&x, &positives);
        let n = positives.len() as f64;
        let tau = config.tau.unwrap_or(1e-4 * n);
        let cont = SpeusProblem::new(xp, t, config.base)?.with_penalties(tau, tau)?;
        if !(config.beta_ridge >= 0.0) {
            return Err(Error::InvalidParameter("beta ridge must be nonnegative".into()));
        }
        let all: Vec<usize> = (0..y.len()).collect();
        let (scale_beta, scale_b) = match config.scaling {
            PenaltyScaling::ColumnNorm => (
                linalg::centered_column_norms(&x, &positives),
                linalg::centered_column_norms(&x, &all),
            ),
            PenaltyScaling::SampleSize => (
                vec![n.sqrt(); x.ncols()],
                vec![(y.len() as f64).sqrt(); x.ncols()],
            ),
        };
        let floor = |v: Vec<f64>, rows: f64| -> Vec<f64> {
            v.into_iter().map(|c| c.max(1e-8 * rows.sqrt())).collect()
        };
        let zero = y.iter().map(|&v| if v == 0.0 { 1.0 } else { 0.0 }).collect();
        Ok(TwoPartProblem {
            scale_beta: floor(scale_beta, n),
            scale_b: floor(scale_b, y.len() as f64),
            x,
            y,
            zero,
            positives,
            cont,
            config,
            warnings,
        })
    }

    /// Rows `rows` (with repeats allowed) under the same configuration.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let x = linalg::select_rows(&self.x, rows);
        let y = rows.iter().map(|&i| self.y[i]).collect();
        TwoPartProblem::new(x, y, self.config.clone())
    }

    pub fn config(&self) -> &TwoPartConfig {
        &self.config
    }

    pub fn n_total(&self) -> usize {
        self.y.len()
    }

    pub fn n_pos(&self) -> usize {
        self.positives.len()
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

    pub fn positives(&self) -> &[usize] {
        &self.positives
    }

    pub fn zero_indicator(&self) -> &[f64] {
        &self.zero
    }

    /// The continuous part on the transformed positives.
    pub fn continuous(&self) -> &SpeusProblem {
        &self.cont
    }

    /// Per-column factors `(c, e)` in `B_j = [c_j β_j, e_j b_j]`.
    pub fn penalty_scales(&self) -> (&[f64], &[f64]) {
        (&self.scale_beta, &self.scale_b)
    }

    pub fn group_norms(&self, th: &TwoPartParams) -> Vec<f64> {
        (0..self.p())
            .map(|j| (self.scale_beta[j] * th.beta[j]).hypot(self.scale_b[j] * th.b[j]))
            .collect()
    }

    /// Logistic negative log-likelihood and its gradient in `(b, b0)`.
    pub fn logistic_nll(&self, b: &[f64], b0: f64) -> (f64, Vec<f64>) {
        logistic(&self.x, &self.zero, b, b0)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `Σ[-ηᵢ zᵢ + log(1 + e^ηᵢ)]` with `η = Xb + b0`; gradient over `(b, b0)`.
fn logistic(x: &DMatrix<f64>, zero: &[f64], b: &[f64], b0: f64) -> (f64, Vec<f64>) {
    let eta = x * DVector::from_column_slice(b);
    let mut f = 0.0;
    let mut resid = DVector::zeros(zero.len());
    for i in 0..zero.len() {
        let e = eta[i] + b0;
        f += softplus(e) - e * zero[i];
        resid[i] = sigmoid(e) - zero[i];
    }
    let mut g: Vec<f64> = x.tr_mul(&resid).iter().copied().collect();
    g.push(resid.sum());
    (f, g)
}

/// Full parameter set of a two-part fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoPartParams {
    pub b: Vec<f64>,
    pub b0: f64,
    pub beta: Vec<f64>,
    pub alpha: f64,
    /// `log σ`.
    pub s: f64,
    /// `log ν`.
    pub t: f64,
    pub m: f64,
}

impl TwoPartParams {
    /// Flat layout `(b, b0, β, α, s, t, m)`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.b.clone();
        v.push(self.b0);
        v.extend(&self.beta);
        v.extend([self.alpha, self.s, self.t, self.m]);
        v
    }

    pub fn from_vec(v: &[f64], p: usize) -> Result<Self> {
        if v.len() != 2 * p + 5 {
            return Err(Error::Dimension(format!(
                "expected {} parameters, got {}",
                2 * p + 5,
                v.len()
            )));
        }
        Ok(TwoPartParams {
            b: v[..p].to_vec(),
            b0: v[p],
            beta: v[p + 1..2 * p + 1].to_vec(),
            alpha: v[2 * p + 1],
            s: v[2 * p + 2],
            t: v[2 * p + 3],
            m: v[2 * p + 4],
        })
    }

    pub fn skew(&self) -> SkewSpec {
        SkewSpec {
            m: self.m,
            sigma: self.s.exp().max(SCALE_FLOOR),
            nu: self.t.exp().max(SCALE_FLOOR),
        }
    }

    fn cont_vec(&self) -> Vec<f64> {
        let mut v = self.beta.clone();
        v.extend([self.alpha, self.s, self.t, self.m]);
        v
    }

    fn set_cont(&mut self, v: &[f64]) {
        let p = self.beta.len();
        self.beta.copy_from_slice(&v[..p]);
        self.alpha = v[p];
        self.s = v[p + 1];
        self.t = v[p + 2];
        self.m = v[p + 3];
    }

    fn bin_vec(&self) -> Vec<f64> {
        let mut v = self.b.clone();
        v.push(self.b0);
        v
    }

    fn set_bin(&mut self, v: &[f64]) {
        let p = self.b.len();
        self.b.copy_from_slice(&v[..p]);
        self.b0 = v[p];
    }
}

fn check_dims(prob: &TwoPartProblem, th: &TwoPartParams) -> Result<()> {
    if th.b.len() != prob.p() || th.beta.len() != prob.p() {
        return Err(Error::Dimension(format!(
            "parameters have {}/{} slopes but the design has {} columns",
            th.b.len(),
            th.beta.len(),
            prob.p()
        )));
    }
    Ok(())
}

/// Smooth part: logistic NLL plus the penalized continuous criterion and the
/// optional ridge. Gradient in the flat layout.
fn smooth_objective(prob: &TwoPartProblem, th: &TwoPartParams) -> (f64, Vec<f64>) {
    let p = prob.p();
    let (fl, gl) = prob.logistic_nll(&th.b, th.b0);
    let (fc, mut gc) = prob
        .cont
        .objective_and_gradient(&th.beta, th.alpha, th.s, th.t, th.m);
    let r = prob.config.beta_ridge;
    let mut f = fl + fc;
    if r > 0.0 {
        f += 0.5 * r * th.beta.iter().map(|v| v * v).sum::<f64>();
        for j in 0..p {
            gc[j] += r * th.beta[j];
        }
    }
    let mut g = gl;
    g.extend(gc);
    (f, g)
}

/// The S² criterion: logistic NLL, continuous pivot-blend criterion with its
/// `τ` terms, and `λ Σ_j ‖B_j‖₂`.
pub fn s2_objective(prob: &TwoPartProblem, th: &TwoPartParams, lambda: f64) -> Result<f64> {
    check_dims(prob, th)?;
    let (f, _) = smooth_objective(prob, th);
    Ok(f + lambda * prob.group_norms(th).iter().sum::<f64>())
}

/// Criterion and gradient in the flat layout `(b, b0, β, α, s, t, m)`. The
/// penalty gradient is only defined when every row of `B` is nonzero; zero
/// rows contribute the zero subgradient.
pub fn s2_objective_and_gradient(
    prob: &TwoPartProblem,
    th: &TwoPartParams,
    lambda: f64,
) -> Result<(f64, Vec<f64>)> {
    check_dims(prob, th)?;
    let p = prob.p();
    let (mut f, mut g) = smooth_objective(prob, th);
    let norms = prob.group_norms(th);
    for j in 0..p {
        f += lambda * norms[j];
        if norms[j] > 0.0 {
            let (c, e) = (prob.scale_beta[j], prob.scale_b[j]);
            g[j] += lambda * e * e * th.b[j] / norms[j];
            g[p + 1 + j] += lambda * c * c * th.beta[j] / norms[j];
        }
    }
    Ok((f, g))
}

/// Gradient of the smooth part with respect to each row of `B`, `‖∂/∂B_j‖₂`.
fn group_gradient_norms(prob: &TwoPartProblem, th: &TwoPartParams) -> Vec<f64> {
    let p = prob.p();
    let (_, g) = smooth_objective(prob, th);
    (0..p)
        .map(|j| (g[j] / prob.scale_b[j]).hypot(g[p + 1 + j] / prob.scale_beta[j]))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TwoPartOptions {
    pub max_outer: usize,
    /// Relative change of the criterion that ends the outer loop.
    pub outer_tol: f64,
    /// Settings of each block's BFGS solve.
    pub inner: BfgsOptions,
    /// Lower bound on the majorization weights `a_j`.
    pub a_floor: f64,
    /// Weight given to rows that are zero at the start but violate the
    /// zero-row stationarity condition.
    pub a_init: f64,
    /// Rows with `‖B_j‖ ≤ support_tol · max_k ‖B_k‖` are set to zero.
    pub support_tol: f64,
    /// Rows below this relative size are zeroed when zero is stationary for them.
    pub prune_tol: f64,
    /// Options of the unpenalized refits used by the cold start and by SCV.
    pub refit: FitOptions,
}

impl Default for TwoPartOptions {
    fn default() -> Self {
        TwoPartOptions {
            max_outer: 200,
            outer_tol: 1e-8,
            inner: BfgsOptions {
                max_iter: 200,
                grad_tol: 1e-8,
                obj_tol: 1e-12,
                max_backtracks: 60,
            },
            a_floor: 1e-8,
            a_init: 1.0,
            support_tol: 1e-6,
            prune_tol: 1e-2,
            refit: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoPartFit {
    pub params: TwoPartParams,
    pub skew: SkewSpec,
    /// Predictor indices with a nonzero row of `B`.
    pub support: Vec<usize>,
    pub group_norms: Vec<f64>,
    pub lambda_used: f64,
    pub objective: f64,
    /// Criterion after each outer iteration.
    pub objective_trace: Vec<f64>,
    pub n_outer: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
}

/// Minimizes `f` over `θ` by BFGS in the rescaled coordinates `z = d ⊙ θ`.
fn minimize_scaled<F>(f: F, th0: &[f64], d: &[f64], opts: &BfgsOptions) -> Result<optim::BfgsResult>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let z0: Vec<f64> = th0.iter().zip(d).map(|(a, b)| a * b).collect();
    let mut res = optim::minimize(
        |z: &[f64]| {
            let th: Vec<f64> = z.iter().zip(d).map(|(a, b)| a / b).collect();
            let (v, g) = f(&th);
            (v, g.iter().zip(d).map(|(a, b)| a / b).collect())
        },
        &z0,
        opts,
    )?;
    res.x.iter_mut().zip(d).for_each(|(a, b)| *a /= b);
    Ok(res)
}

/// Penalized fit at a single `λ`. Runs from the intercept-only model and,
/// when there are enough rows, from the separate unpenalized fits, keeping
/// the lower criterion.
pub fn s2_fit(prob: &TwoPartProblem, lambda: f64, opts: &TwoPartOptions) -> Result<TwoPartFit> {
    let mut best = s2_fit_from(prob, lambda, &null_params(prob, &opts.refit)?, opts)?;
    if prob.p() + 3 < prob.n_pos() {
        if let Ok(full) = separate_fits(prob, &opts.refit)
            .and_then(|start| s2_fit_from(prob, lambda, &start, opts))
        {
            if full.objective < best.objective {
                best = full;
            }
        }
    }
    Ok(best)
}

/// Penalized fit from a given start (warm starts along a path).
pub fn s2_fit_from(
    prob: &TwoPartProblem,
    lambda: f64,
    start: &TwoPartParams,
    opts: &TwoPartOptions,
) -> Result<TwoPartFit> {
    check_dims(prob, start)?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda must be nonnegative, got {lambda}")));
    }
    let p = prob.p();
    let n = prob.n_pos() as f64;
    let big_n = prob.n_total() as f64;
    let mut th = start.clone();
    let mut warnings = Vec::new();
    if !s2_objective(prob, &th, lambda)?.is_finite() {
        return Err(Error::numerical("two-part fit", "criterion is not finite at the start"));
    }

    // zero rows that want to move get a sizeable weight so they can leave zero
    let norms = prob.group_norms(&th);
    let grad_norms = group_gradient_norms(prob, &th);
    let mut a: Vec<f64> = (0..p)
        .map(|j| {
            if norms[j] > opts.a_floor {
                norms[j]
            } else if grad_norms[j] > lambda {
                opts.a_init
            } else {
                opts.a_floor
            }
        })
        .collect();

    let colsq_x: Vec<f64> = prob.scale_beta.iter().map(|c| c * c).collect();
    let colsq_z: Vec<f64> = linalg::centered_column_norms(&prob.x, &(0..prob.n_total()).collect::<Vec<_>>())
        .iter()
        .map(|c| c * c)
        .collect();
    let slack_floor = lambda * p as f64 * opts.a_floor;
    let mut trace = Vec::new();
    let mut prev = f64::INFINITY;
    let mut converged = false;
    let mut n_outer = 0;

    while n_outer < opts.max_outer {
        n_outer += 1;
        let w_beta: Vec<f64> = (0..p)
            .map(|j| lambda * prob.scale_beta[j].powi(2) / a[j])
            .collect();
        let w_b: Vec<f64> = (0..p).map(|j| lambda * prob.scale_b[j].powi(2) / a[j]).collect();

        // continuous block
        let sig_min = th.s.min(th.t).exp().max(1e-6);
        let mut d: Vec<f64> = (0..p)
            .map(|j| (colsq_x[j] / (sig_min * sig_min) + w_beta[j]).sqrt().max(1e-8))
            .collect();
        d.extend([n.sqrt() / sig_min, n.sqrt(), n.sqrt(), n.sqrt()]);
        let ridge = prob.config.beta_ridge;
        let cont_fg = |v: &[f64]| {
            let (mut f, mut g) = prob.cont.objective_and_gradient(&v[..p], v[p], v[p + 1], v[p + 2], v[p + 3]);
            for j in 0..p {
                let w = w_beta[j] + ridge;
                f += 0.5 * w * v[j] * v[j];
                g[j] += w * v[j];
            }
            (f, g)
        };
        let res = minimize_scaled(cont_fg, &th.cont_vec(), &d, &opts.inner)?;
        th.set_cont(&res.x);

        // binary block
        let mut d: Vec<f64> = (0..p)
            .map(|j| (0.25 * colsq_z[j] + w_b[j]).sqrt().max(1e-8))
            .collect();
        d.push((0.25 * big_n).sqrt());
        let bin_fg = |v: &[f64]| {
            let (mut f, mut g) = prob.logistic_nll(&v[..p], v[p]);
            for j in 0..p {
                f += 0.5 * w_b[j] * v[j] * v[j];
                g[j] += w_b[j] * v[j];
            }
            (f, g)
        };
        let res = minimize_scaled(bin_fg, &th.bin_vec(), &d, &opts.inner)?;
        th.set_bin(&res.x);

        let norms = prob.group_norms(&th);
        for j in 0..p {
            a[j] = norms[j].max(opts.a_floor);
        }
        let f = s2_objective(prob, &th, lambda)?;
        if f > prev + 1e-10 * prev.abs().max(1.0) + slack_floor {
            return Err(Error::Internal(format!(
                "majorize-minimize step increased the criterion from {prev} to {f} at outer iteration {n_outer}"
            )));
        }
        trace.push(f);
        if (prev - f).abs() <= opts.outer_tol * f.abs().max(1.0) {
            converged = true;
            break;
        }
        prev = f;
    }
    if !converged {
        warnings.push(format!("outer loop hit the cap of {} iterations", opts.max_outer));
    }

    prune(prob, &mut th, lambda, opts);
    let norms = prob.group_norms(&th);
    let support: Vec<usize> = (0..p).filter(|&j| norms[j] > 0.0).collect();
    let objective = s2_objective(prob, &th, lambda)?;
    Ok(TwoPartFit {
        skew: th.skew(),
        params: th,
        support,
        group_norms: norms,
        lambda_used: lambda,
        objective,
        objective_trace: trace,
        n_outer,
        converged,
        warnings,
    })
}

/// Rows within this multiple of the majorization floor are pruning candidates
/// regardless of the largest row.
const ABS_PRUNE: f64 = 1e3;

/// Zeroes rows that the majorization only shrinks toward zero: tiny rows
/// unconditionally, small rows when zero is stationary for them.
fn prune(prob: &TwoPartProblem, th: &mut TwoPartParams, lambda: f64, opts: &TwoPartOptions) {
    let p = prob.p();
    let norms = prob.group_norms(th);
    let top = norms.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return;
    }
    let mut cand = Vec::new();
    for j in 0..p {
        if norms[j] <= opts.support_tol * top {
            th.beta[j] = 0.0;
            th.b[j] = 0.0;
        } else if norms[j] <= opts.prune_tol * top || norms[j] <= ABS_PRUNE * opts.a_floor {
            // the second test catches fits where every row sits near the floor
            cand.push(j);
        }
    }
    if cand.is_empty() {
        return;
    }
    let mut trial = th.clone();
    for &j in &cand {
        trial.beta[j] = 0.0;
        trial.b[j] = 0.0;
    }
    let g = group_gradient_norms(prob, &trial);
    for &j in &cand {
        if g[j] <= lambda * (1.0 + 1e-6) {
            th.beta[j] = 0.0;
            th.b[j] = 0.0;
        }
    }
}

/// Logistic fit on the listed columns by BFGS.
fn logistic_fit(x: &DMatrix<f64>, zero: &[f64], opts: &BfgsOptions) -> Result<(Vec<f64>, f64)> {
    let p = x.ncols();
    let frac = numeric::mean(zero).clamp(1e-12, 1.0 - 1e-12);
    let mut th0 = vec![0.0; p];
    th0.push((frac / (1.0 - frac)).ln());
    let all: Vec<usize> = (0..x.nrows()).collect();
    let mut d: Vec<f64> = linalg::centered_column_norms(x, &all)
        .iter()
        .map(|c| (0.5 * c).max(1e-8))
        .collect();
    d.push((0.25 * x.nrows() as f64).sqrt());
    let res = minimize_scaled(|v| logistic(x, zero, &v[..p], v[p]), &th0, &d, opts)?;
    Ok((res.x[..p].to_vec(), res.x[p]))
}

/// Intercept-only model: `b0 = logit(share of zeros)` and a pivot-blend fit
/// of the transformed positives without predictors.
pub fn null_params(prob: &TwoPartProblem, refit: &FitOptions) -> Result<TwoPartParams> {
    let p = prob.p();
    let frac = numeric::mean(&prob.zero);
    let b0 = (frac / (1.0 - frac)).ln();
    let empty = DMatrix::zeros(prob.n_pos(), 0);
    let c = &prob.cont;
    let cp = SpeusProblem::new(empty, c.y().to_vec(), c.base)?.with_penalties(c.tau_scale, c.tau_pivot)?;
    let fit = speus_fit(&cp, refit)?;
    Ok(TwoPartParams {
        b: vec![0.0; p],
        b0,
        beta: vec![0.0; p],
        alpha: fit.alpha,
        s: fit.skew.sigma.ln(),
        t: fit.skew.nu.ln(),
        m: fit.skew.m,
    })
}

/// Unpenalized logistic and pivot-blend fits on the columns in `support`,
/// embedded back into the full coefficient vectors.
pub fn refit_on_support(
    prob: &TwoPartProblem,
    support: &[usize],
    refit: &FitOptions,
) -> Result<TwoPartParams> {
    let p = prob.p();
    let xs = linalg::select_columns(&prob.x, support);
    let (bs, b0) = logistic_fit(&xs, &prob.zero, &BfgsOptions { max_iter: 500, ..BfgsOptions::default() })?;
    let c = &prob.cont;
    let cp = SpeusProblem::new(linalg::select_columns(c.x(), support), c.y().to_vec(), c.base)?
        .with_penalties(c.tau_scale, c.tau_pivot)?;
    let fit = speus_fit(&cp, refit)?;
    let mut b = vec![0.0; p];
    let mut beta = vec![0.0; p];
    for (k, &j) in support.iter().enumerate() {
        b[j] = bs[k];
        beta[j] = fit.beta[k];
    }
    Ok(TwoPartParams {
        b,
        b0,
        beta,
        alpha: fit.alpha,
        s: fit.skew.sigma.ln(),
        t: fit.skew.nu.ln(),
        m: fit.skew.m,
    })
}

/// Separate unpenalized logistic and pivot-blend fits on every predictor;
/// the `λ = 0` solution because the criterion is then separable.
pub fn separate_fits(prob: &TwoPartProblem, refit: &FitOptions) -> Result<TwoPartParams> {
    refit_on_support(prob, &(0..prob.p()).collect::<Vec<_>>(), refit)
}

/// Smallest `λ` at which the intercept-only model is stationary.
pub fn lambda_max(prob: &TwoPartProblem, refit: &FitOptions) -> Result<f64> {
    let null = null_params(prob, refit)?;
    Ok(group_gradient_norms(prob, &null)
        .into_iter()
        .fold(0.0, f64::max))
}

/// `λ_max · (1e-3)^{k/(K-1)}` for `k = 0..K`.
pub fn lambda_grid(lambda_max: f64, n_lambda: usize) -> Vec<f64> {
    (0..n_lambda)
        .map(|k| lambda_max * 1e-3f64.powf(k as f64 / (n_lambda - 1) as f64))
        .collect()
}

/// Warm-started fits along a decreasing `λ` grid starting at `λ_max`.
pub fn s2_path(prob: &TwoPartProblem, n_lambda: usize, opts: &TwoPartOptions) -> Result<Vec<TwoPartFit>> {
    if n_lambda < 2 {
        return Err(Error::InvalidParameter(format!("a path needs at least 2 points, got {n_lambda}")));
    }
    let lmax = lambda_max(prob, &opts.refit)?;
    s2_path_on(prob, &lambda_grid(lmax, n_lambda), opts)
}

/// Warm-started fits along a caller-supplied grid (largest first).
pub fn s2_path_on(prob: &TwoPartProblem, grid: &[f64], opts: &TwoPartOptions) -> Result<Vec<TwoPartFit>> {
    let mut start = null_params(prob, &opts.refit)?;
    let mut out: Vec<TwoPartFit> = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let mut fit = s2_fit_from(prob, lambda, &start, opts)?;
        if let Some(prev) = out.last() {
            if fit.support.len() < prev.support.len() {
                fit.warnings.push(format!(
                    "support shrank from {} to {} rows as lambda decreased",
                    prev.support.len(),
                    fit.support.len()
                ));
            }
        }
        start = fit.params.clone();
        out.push(fit);
    }
    Ok(out)
}

/// Negative log-likelihood of rows under fitted parameters: logistic term on
/// every row plus the pivot-blend density of the transformed positives.
pub fn heldout_nll(prob: &TwoPartProblem, th: &TwoPartParams) -> Result<f64> {
    check_dims(prob, th)?;
    let (fl, _) = prob.logistic_nll(&th.b, th.b0);
    let dist = SpDistribution::new(prob.config.base, th.skew());
    let r = prob.cont.residuals(&th.beta, th.alpha);
    let fc: f64 = r.iter().map(|&v| -dist.log_pdf(v)).sum();
    Ok(fl + fc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub fold: usize,
    pub lambda_index: usize,
    pub lambda: f64,
    pub support_size: usize,
    /// Validation negative log-likelihood per validation row.
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScvResult {
    pub lambdas: Vec<f64>,
    pub cv_table: Vec<CvRow>,
    pub mean_loss: Vec<f64>,
    pub std_err: Vec<f64>,
    pub index_min: usize,
    pub index_1se: usize,
    pub lambda_star: f64,
    pub lambda_1se: f64,
    /// Full-data path on the same grid.
    pub path: Vec<TwoPartFit>,
}

impl ScvResult {
    pub fn selected(&self) -> &TwoPartFit {
        &self.path[self.index_min]
    }
}

/// Stratified fold labels: zeros and positives are shuffled separately and
/// dealt round-robin.
pub fn stratified_folds(prob: &TwoPartProblem, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 folds, got {folds}")));
    }
    let n_zero = prob.n_total() - prob.n_pos();
    if prob.n_pos() < folds || n_zero < folds {
        return Err(Error::Stratification(format!(
            "{} positives and {n_zero} zeros cannot fill {folds} folds",
            prob.n_pos()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut label = vec![0; prob.n_total()];
    for want_zero in [true, false] {
        let mut idx: Vec<usize> = (0..prob.n_total())
            .filter(|&i| (prob.zero[i] == 1.0) == want_zero)
            .collect();
        idx.shuffle(&mut rng);
        for (k, i) in idx.into_iter().enumerate() {
            label[i] = k % folds;
        }
    }
    Ok(label)
}

/// Selective cross-validation: for each `λ` on the full-data grid, take the
/// support chosen on the training folds, refit without penalty on it and
/// score the held-out negative log-likelihood.
pub fn select_lambda_scv(
    prob: &TwoPartProblem,
    folds: usize,
    n_lambda: usize,
    seed: u64,
    opts: &TwoPartOptions,
) -> Result<ScvResult> {
    if n_lambda < 2 {
        return Err(Error::InvalidParameter(format!("a path needs at least 2 points, got {n_lambda}")));
    }
    let label = stratified_folds(prob, folds, seed)?;
    let lambdas = lambda_grid(lambda_max(prob, &opts.refit)?, n_lambda);
    let per_fold: Vec<Result<Vec<CvRow>>> = (0..folds)
        .into_par_iter()
        .map(|k| {
            let train: Vec<usize> = (0..prob.n_total()).filter(|&i| label[i] != k).collect();
            let valid: Vec<usize> = (0..prob.n_total()).filter(|&i| label[i] == k).collect();
            let tr = prob.subset(&train)?;
            let va = prob.subset(&valid)?;
            let path = s2_path_on(&tr, &lambdas, opts)?;
            let mut cache: HashMap<Vec<usize>, f64> = HashMap::new();
            let mut rows = Vec::with_capacity(path.len());
            for (li, fit) in path.iter().enumerate() {
                let loss = match cache.get(&fit.support) {
                    Some(v) => *v,
                    None => {
                        let th = refit_on_support(&tr, &fit.support, &opts.refit)?;
                        let v = heldout_nll(&va, &th)? / valid.len() as f64;
                        cache.insert(fit.support.clone(), v);
                        v
                    }
                };
                rows.push(CvRow {
                    fold: k,
                    lambda_index: li,
                    lambda: lambdas[li],
                    support_size: fit.support.len(),
                    loss,
                });
            }
            Ok(rows)
        })
        .collect();
    let mut cv_table = Vec::with_capacity(folds * n_lambda);
    for r in per_fold {
        cv_table.extend(r?);
    }
    let mut mean_loss = vec![0.0; n_lambda];
    let mut std_err = vec![0.0; n_lambda];
    for li in 0..n_lambda {
        let v: Vec<f64> = cv_table
            .iter()
            .filter(|r| r.lambda_index == li)
            .map(|r| if r.loss.is_finite() { r.loss } else { f64::INFINITY })
            .collect();
        mean_loss[li] = numeric::mean(&v);
        std_err[li] = numeric::std_dev(&v) / (v.len() as f64).sqrt();
    }
    let index_min = (0..n_lambda)
        .min_by(|&a, &b| mean_loss[a].total_cmp(&mean_loss[b]))
        .unwrap_or(0);
    let cut = mean_loss[index_min] + std_err[index_min];
    // largest λ (smallest index) within one standard error of the minimum
    let index_1se = (0..=index_min).find(|&li| mean_loss[li] <= cut).unwrap_or(index_min);
    let path = s2_path_on(prob, &lambdas, opts)?;
    Ok(ScvResult {
        lambda_star: lambdas[index_min],
        lambda_1se: lambdas[index_1se],
        lambdas,
        cv_table,
        mean_loss,
        std_err,
        index_min,
        index_1se,
        path,
    })
}

/// Analytic bounds on the effective noise for bounded `|ρ'| ≤ M`, `|𝔏'| ≤ B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseBounds {
    pub m_bound: f64,
    pub b_bound: f64,
    /// `M/(σ∧ν) + B`, for every entry of `ε_η`.
    pub eta: f64,
    /// `(|1-1/σ| ∨ |1-1/ν|) M + |σ-ν|/(σ∧ν)`, for every entry of `ε_m`.
    pub m: f64,
    /// `M |ε^raw_i| + (σ∨ν)`, for entries `i` and `i+n` of `ε_ς`.
    pub sigma_nu: Vec<f64>,
}

/// Negative gradients of the unpenalized loss at a parameter point, with
/// respect to the linear predictors, the per-row pivot and the per-row
/// inverse scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveNoise {
    /// `n` continuous rows followed by all `N` binary rows.
    pub eps_eta: Vec<f64>,
    pub eps_m: Vec<f64>,
    /// `n` entries for `1/σ` then `n` for `1/ν`.
    pub eps_sigma_nu: Vec<f64>,
    /// `ε^raw = T(y) - Xβ - α - m` on the positives.
    pub raw: Vec<f64>,
    /// `None` when `ρ'` is unbounded.
    pub bounds: Option<NoiseBounds>,
}

impl EffectiveNoise {
    /// True when every component satisfies its bound (false without bounds).
    pub fn within_bounds(&self) -> bool {
        let Some(b) = &self.bounds else { return false };
        let n = self.eps_m.len();
        let tol = |v: f64| v * (1.0 + 1e-12) + 1e-15;
        self.eps_eta.iter().all(|e| e.abs() <= tol(b.eta))
            && self.eps_m.iter().all(|e| e.abs() <= tol(b.m))
            && (0..n).all(|i| {
                self.eps_sigma_nu[i].abs() <= tol(b.sigma_nu[i])
                    && self.eps_sigma_nu[n + i].abs() <= tol(b.sigma_nu[i])
            })
    }
}

/// Logistic deviance derivative bound `|𝔏'| ≤ 1`.
pub const LOGISTIC_DERIV_BOUND: f64 = 1.0;

/// Effective noise at `th` (typically the truth).
pub fn effective_noise(prob: &TwoPartProblem, th: &TwoPartParams) -> Result<EffectiveNoise> {
    check_dims(prob, th)?;
    let base = prob.config.base;
    let SkewSpec { m, sigma, nu } = th.skew();
    let q = base.cdf(m);
    let z = sigma * q + nu * (1.0 - q);
    let raw: Vec<f64> = prob
        .cont
        .residuals(&th.beta, th.alpha)
        .iter()
        .map(|r| r - m)
        .collect();
    let n = raw.len();
    let mut eps_eta = Vec::with_capacity(n + prob.n_total());
    let mut eps_m = Vec::with_capacity(n);
    let mut left_part = Vec::with_capacity(n);
    let mut right_part = Vec::with_capacity(n);
    let m_const = base.pdf(m) * (nu - sigma) / z;
    for &e in &raw {
        if e <= 0.0 {
            let d = base.loss_deriv(e / sigma + m);
            eps_eta.push(d / sigma);
            eps_m.push((1.0 / sigma - 1.0) * d + m_const);
            left_part.push(-e * d + sigma * sigma * q / z);
            right_part.push(nu * nu * (1.0 - q) / z);
        } else {
            let d = base.loss_deriv(e / nu + m);
            eps_eta.push(d / nu);
            eps_m.push((1.0 / nu - 1.0) * d + m_const);
            left_part.push(sigma * sigma * q / z);
            right_part.push(-e * d + nu * nu * (1.0 - q) / z);
        }
    }
    let eta = &prob.x * DVector::from_column_slice(&th.b);
    for i in 0..prob.n_total() {
        eps_eta.push(prob.zero[i] - sigmoid(eta[i] + th.b0));
    }
    let mut eps_sigma_nu = left_part;
    eps_sigma_nu.extend(right_part);
    let bounds = base.loss_deriv_bound().map(|mb| {
        let bb = LOGISTIC_DERIV_BOUND;
        NoiseBounds {
            m_bound: mb,
            b_bound: bb,
            eta: mb / sigma.min(nu) + bb,
            m: (1.0 - 1.0 / sigma).abs().max((1.0 - 1.0 / nu).abs()) * mb
                + (sigma - nu).abs() / sigma.min(nu),
            sigma_nu: raw.iter().map(|e| mb * e.abs() + sigma.max(nu)).collect(),
        }
    });
    Ok(EffectiveNoise {
        eps_eta,
        eps_m,
        eps_sigma_nu,
        raw,
        bounds,
    })
}

/// Noise level in the theoretical regularization parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Omega {
    Value(f64),
    /// `M/(σ̂∧ν̂) + B` from the bound on `ε_η`.
    Auto { base: BaseDensity, skew: SkewSpec, b_bound: f64 },
}

/// `A · ω · (log p)^{1/q}`.
pub fn lambda_theory(p: usize, q: f64, a: f64, omega: Omega) -> Result<f64> {
    if p < 2 {
        return Err(Error::InvalidParameter(format!("need p >= 2, got {p}")));
    }
    if !(q > 0.0 && a > 0.0) {
        return Err(Error::InvalidParameter(format!("q and A must be positive, got {q} and {a}")));
    }
    let w = match omega {
        Omega::Value(w) if w > 0.0 && w.is_finite() => w,
        Omega::Value(w) => return Err(Error::InvalidParameter(format!("omega must be positive, got {w}"))),
        Omega::Auto { base, skew, b_bound } => {
            let mb = base.loss_deriv_bound().ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "automatic omega needs a bounded loss derivative; {base} has none"
                ))
            })?;
            mb / skew.sigma.min(skew.nu) + b_bound
        }
    };
    Ok(a * w * (p as f64).ln().powf(1.0 / q))
}
