//! Residual diagnostics by backward pivot blending.
//!
//! Residuals of a pivot-blend fit are pushed back through the inverse affine
//! pieces. The two sides then carry different probabilities, `ν/(Lν+Rσ)` on
//! the left and `σ/(Lν+Rσ)` on the right, and the weighted sample should
//! follow the base law when the skewness has been captured. Note that the
//! weights need nothing from the base density itself.

use serde::{Deserialize, Serialize};

use crate::density::{BaseDensity, SkewSpec};
use crate::error::{Error, Result};
use crate::numeric;
use crate::speus::{SpFit, SpeusProblem};

/// Back-transformed residuals with their probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedSample {
    pub values: Vec<f64>,
    pub weights: Vec<f64>,
    /// Residuals at or below the pivot.
    pub n_left: usize,
    pub n_right: usize,
}

impl WeightedSample {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Kish effective sample size `1 / Σ wᵢ²`.
    pub fn n_eff(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// Estimated probability of the left branch, `Lν/(Lν+Rσ)`.
    pub fn left_mass(&self) -> f64 {
        self.weights[..self.n_left].iter().sum()
    }

    /// Values and weights sorted by value.
    fn sorted(&self) -> (Vec<f64>, Vec<f64>) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.values[a].total_cmp(&self.values[b]));
        (
            idx.iter().map(|&i| self.values[i]).collect(),
            idx.iter().map(|&i| self.weights[i]).collect(),
        )
    }

    fn weighted_mean_sd(&self) -> (f64, f64) {
        let mu: f64 = self.values.iter().zip(&self.weights).map(|(v, w)| v * w).sum();
        let var: f64 = self
            .values
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| w * (v - mu).powi(2))
            .sum();
        (mu, var.sqrt())
    }

    /// Lower weighted quantile: smallest value whose cumulative weight reaches `u`.
    pub fn quantile(&self, u: f64) -> f64 {
        let (v, w) = self.sorted();
        let mut acc = 0.0;
        for (vi, wi) in v.iter().zip(&w) {
            acc += wi;
            if acc >= u - 1e-15 {
                return *vi;
            }
        }
        *v.last().unwrap_or(&f64::NAN)
    }
}

/// Back-transforms residuals and attaches the two-level weights.
pub fn backward_blend(residuals: &[f64], skew: &SkewSpec) -> Result<WeightedSample> {
    if residuals.is_empty() {
        return Err(Error::EmptyInput("no residuals to back-transform".into()));
    }
    let (sigma, nu) = (skew.sigma, skew.nu);
    let n_left = residuals.iter().filter(|&&r| r <= skew.m).count();
    let n_right = residuals.len() - n_left;
    let denom = n_left as f64 * nu + n_right as f64 * sigma;
    let (wl, wr) = (nu / denom, sigma / denom);
    let mut values = Vec::with_capacity(residuals.len());
    let mut weights = Vec::with_capacity(residuals.len());
    // left group first so callers can recover group membership from n_left
    for &r in residuals.iter().filter(|&&r| r <= skew.m) {
        values.push(skew.back_transform(r));
        weights.push(wl);
    }
    for &r in residuals.iter().filter(|&&r| r > skew.m) {
        values.push(skew.back_transform(r));
        weights.push(wr);
    }
    Ok(WeightedSample {
        values,
        weights,
        n_left,
        n_right,
    })
}

/// `Σ_{vᵢ ≤ t} wᵢ`.
pub fn weighted_ecdf(ws: &WeightedSample, t: f64) -> f64 {
    let s: f64 = ws
        .values
        .iter()
        .zip(&ws.weights)
        .filter(|(v, _)| **v <= t)
        .map(|(_, w)| w)
        .sum();
    s.min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub stat: f64,
    /// Asymptotic Kolmogorov p-value at the Kish effective sample size;
    /// approximate under unequal weights.
    pub pvalue: f64,
}

/// Weighted Kolmogorov–Smirnov distance to `target`.
pub fn weighted_ks(ws: &WeightedSample, target: &BaseDensity) -> Result<KsResult> {
    if ws.is_empty() {
        return Err(Error::EmptyInput("weighted KS needs at least one value".into()));
    }
    let (v, w) = ws.sorted();
    let mut acc = 0.0;
    let mut stat: f64 = 0.0;
    let mut i = 0;
    while i < v.len() {
        let f = target.cdf(v[i]);
        let before = acc;
        // ties share one jump
        let mut j = i;
        while j < v.len() && v[j] == v[i] {
            acc += w[j];
            j += 1;
        }
        stat = stat.max((f - before).abs()).max((acc.min(1.0) - f).abs());
        i = j;
    }
    let pvalue = numeric::kolmogorov_sf(ws.n_eff().sqrt() * stat);
    Ok(KsResult { stat, pvalue })
}

/// Silverman's rule `0.9·min(sd, IQR/1.34)·n_eff^{-1/5}` on the weighted sample.
pub fn silverman_bandwidth(ws: &WeightedSample) -> f64 {
    let (_, sd) = ws.weighted_mean_sd();
    let iqr = ws.quantile(0.75) - ws.quantile(0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * ws.n_eff().powf(-0.2);
    if h > 0.0 && h.is_finite() {
        h
    } else {
        1e-3
    }
}

/// Weighted Gaussian-kernel density estimate of the back-transformed
/// residuals; `h = None` picks Silverman's bandwidth.
pub fn weighted_kde(
    residuals: &[f64],
    skew: &SkewSpec,
    grid: &[f64],
    h: Option<f64>,
) -> Result<Vec<f64>> {
    let ws = backward_blend(residuals, skew)?;
    kde_sample(&ws, grid, h)
}

/// Density estimate from an already blended sample.
pub fn kde_sample(ws: &WeightedSample, grid: &[f64], h: Option<f64>) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(Error::Domain("KDE grid is empty".into()));
    }
    let h = match h {
        Some(h) if h > 0.0 && h.is_finite() => h,
        Some(h) => return Err(Error::InvalidParameter(format!("bandwidth must be positive, got {h}"))),
        None => silverman_bandwidth(ws),
    };
    let (v, w) = ws.sorted();
    let reach = 9.0 * h;
    Ok(grid
        .iter()
        .map(|&t| {
            let lo = v.partition_point(|&x| x < t - reach);
            let hi = v.partition_point(|&x| x <= t + reach);
            (lo..hi)
                .map(|i| w[i] * numeric::normal_pdf((v[i] - t) / h))
                .sum::<f64>()
                / h
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistBin {
    pub lo: f64,
    pub hi: f64,
    pub weighted_mass: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub t: f64,
    pub f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsBundle {
    pub bins: Vec<HistBin>,
    pub kde: Vec<CurvePoint>,
    pub overlay: Vec<CurvePoint>,
    pub ks: KsResult,
    /// Whether the weighted KS test fails to reject the base law at 5%.
    pub verdict: bool,
}

pub const HIST_BINS: usize = 50;
pub const KDE_POINTS: usize = 512;
pub const VERDICT_LEVEL: f64 = 0.05;

/// Weighted histogram with `n_bins` equal bins over the value range.
pub fn weighted_histogram(ws: &WeightedSample, n_bins: usize) -> Vec<HistBin> {
    let (lo, hi) = ws
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let n_bins = n_bins.max(1);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
    let width = (hi - lo) / n_bins as f64;
    let mut mass = vec![0.0; n_bins];
    for (v, w) in ws.values.iter().zip(&ws.weights) {
        let k = (((v - lo) / width) as usize).min(n_bins - 1);
        mass[k] += w;
    }
    mass.into_iter()
        .enumerate()
        .map(|(k, m)| HistBin {
            lo: lo + k as f64 * width,
            hi: if k + 1 == n_bins { hi } else { lo + (k + 1) as f64 * width },
            weighted_mass: m,
        })
        .collect()
}

/// `(theoretical, sample)` quantile pairs at the mid-cumulative weight of
/// each sorted value.
pub fn qq_pairs(ws: &WeightedSample, base: &BaseDensity) -> Vec<(f64, f64)> {
    let (v, w) = ws.sorted();
    let mut acc = 0.0;
    v.iter()
        .zip(&w)
        .map(|(vi, wi)| {
            let u = (acc + 0.5 * wi).clamp(1e-12, 1.0 - 1e-12);
            acc += wi;
            (base.quantile(u), *vi)
        })
        .collect()
}

/// Blended sample of a fitted model's residuals.
pub fn fit_sample(fit: &SpFit, prob: &SpeusProblem) -> Result<WeightedSample> {
    if fit.beta.len() != prob.p() {
        return Err(Error::Dimension(format!(
            "fit has {} coefficients but the design has {} columns",
            fit.beta.len(),
            prob.p()
        )));
    }
    backward_blend(&prob.residuals(&fit.beta, fit.alpha), &fit.skew)
}

/// Histogram, KDE, base overlay and KS verdict for a converged fit.
pub fn diagnostics_report(fit: &SpFit, prob: &SpeusProblem) -> Result<DiagnosticsBundle> {
    if !fit.converged {
        return Err(Error::NotConverged(format!(
            "the fit stopped with {:?} after {} iterations; diagnostics of an unconverged fit would be misleading",
            fit.termination, fit.n_iter
        )));
    }
    let ws = fit_sample(fit, prob)?;
    diagnostics_bundle(&ws, &fit.base)
}

/// Report for an already blended sample against `base`.
pub fn diagnostics_bundle(ws: &WeightedSample, base: &BaseDensity) -> Result<DiagnosticsBundle> {
    let h = silverman_bandwidth(ws);
    let (lo, hi) = ws
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let (lo, hi) = (lo - 3.0 * h, hi + 3.0 * h);
    let grid: Vec<f64> = (0..KDE_POINTS)
        .map(|k| lo + (hi - lo) * k as f64 / (KDE_POINTS - 1) as f64)
        .collect();
    let dens = kde_sample(ws, &grid, Some(h))?;
    let ks = weighted_ks(ws, base)?;
    Ok(DiagnosticsBundle {
        bins: weighted_histogram(ws, HIST_BINS),
        kde: grid.iter().zip(&dens).map(|(&t, &f)| CurvePoint { t, f }).collect(),
        overlay: grid.iter().map(|&t| CurvePoint { t, f: base.pdf(t) }).collect(),
        verdict: ks.pvalue > VERDICT_LEVEL,
        ks,
    })
}
