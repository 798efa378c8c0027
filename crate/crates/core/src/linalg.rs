//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Appends a column of ones when `intercept` is set.
pub fn with_intercept(x: &DMatrix<f64>, intercept: bool) -> DMatrix<f64> {
    if !intercept {
        return x.clone();
    }
    x.clone().insert_column(x.ncols(), 1.0)
}

fn split(coef: DVector<f64>, p: usize, intercept: bool) -> (Vec<f64>, f64) {
    let beta = coef.rows(0, p).iter().copied().collect();
    let alpha = if intercept { coef[p] } else { 0.0 };
    (beta, alpha)
}

/// Least squares `(β, α)` through a truncated SVD, so rank-deficient designs
/// get the minimum-norm solution instead of an error.
pub fn ols(x: &DMatrix<f64>, y: &[f64], intercept: bool) -> Result<(Vec<f64>, f64)> {
    wls(x, y, None, intercept)
}

/// Weighted least squares with nonnegative row weights.
pub fn wls(
    x: &DMatrix<f64>,
    y: &[f64],
    weights: Option<&[f64]>,
    intercept: bool,
) -> Result<(Vec<f64>, f64)> {
    if x.nrows() != y.len() {
        return Err(Error::Dimension(format!(
            "design has {} rows but response has {}",
            x.nrows(),
            y.len()
        )));
    }
    let mut a = with_intercept(x, intercept);
    let mut b = DVector::from_column_slice(y);
    if let Some(w) = weights {
        for (i, wi) in w.iter().enumerate() {
            let s = wi.max(0.0).sqrt();
            a.row_mut(i).scale_mut(s);
            b[i] *= s;
        }
    }
    let svd = a.svd(true, true);
    let tol = 1e-12 * svd.singular_values.max().max(1e-300);
    let coef = svd
        .solve(&b, tol)
        .map_err(|e| Error::numerical("least squares", e.to_string()))?;
    Ok(split(coef, x.ncols(), intercept))
}

/// Least absolute deviations by iteratively reweighted least squares.
pub fn lad(x: &DMatrix<f64>, y: &[f64], intercept: bool) -> Result<(Vec<f64>, f64)> {
    let (mut beta, mut alpha) = ols(x, y, intercept)?;
    let scale = crate::numeric::std_dev(y).max(1e-12);
    let mut w = vec![1.0; y.len()];
    for _ in 0..100 {
        let r = residuals(x, y, &beta, alpha);
        for (wi, ri) in w.iter_mut().zip(&r) {
            *wi = 1.0 / ri.abs().max(1e-8 * scale);
        }
        let (nb, na) = wls(x, y, Some(&w), intercept)?;
        let delta = nb
            .iter()
            .zip(&beta)
            .map(|(a, b)| (a - b).abs())
            .fold((na - alpha).abs(), f64::max);
        beta = nb;
        alpha = na;
        if delta < 1e-10 * scale {
            break;
        }
    }
    Ok((beta, alpha))
}

/// `y - Xβ - α`.
pub fn residuals(x: &DMatrix<f64>, y: &[f64], beta: &[f64], alpha: f64) -> Vec<f64> {
    let fitted = x * DVector::from_column_slice(beta);
    y.iter()
        .zip(fitted.iter())
        .map(|(yi, fi)| yi - fi - alpha)
        .collect()
}

/// Lower Cholesky factor of the Toeplitz matrix `[κ^|i-j|]`.
pub fn toeplitz_cholesky(p: usize, kappa: f64) -> Result<DMatrix<f64>> {
    let sigma = DMatrix::from_fn(p, p, |i, j| kappa.powi((i as i32 - j as i32).abs()));
    sigma
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::Internal(format!("Toeplitz matrix with kappa={kappa} is not positive definite")))
}

/// Euclidean norms of the centered columns of `x` restricted to `rows`.
pub fn centered_column_norms(x: &DMatrix<f64>, rows: &[usize]) -> Vec<f64> {
    (0..x.ncols())
        .map(|j| {
            let n = rows.len().max(1) as f64;
            let mean = rows.iter().map(|&i| x[(i, j)]).sum::<f64>() / n;
            rows.iter()
                .map(|&i| (x[(i, j)] - mean).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

/// Copies the listed rows of `x` into a new matrix.
pub fn select_rows(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), x.ncols(), |i, j| x[(rows[i], j)])
}

/// Copies the listed columns of `x` into a new matrix.
pub fn select_columns(x: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), cols.len(), |i, j| x[(i, cols[j])])
}
