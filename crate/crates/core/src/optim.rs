//! Dense BFGS with an Armijo backtracking line search.
//!
//! Objectives report `+∞` for infeasible points; the line search treats those
//! as rejected trial steps, so constraints that only appear through the
//! objective's domain are respected without projection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Stop once `‖g‖∞` falls below this.
    pub grad_tol: f64,
    /// Stop after two consecutive steps with relative objective change below this.
    pub obj_tol: f64,
    pub max_backtracks: usize,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions {
            max_iter: 500,
            grad_tol: 1e-6,
            obj_tol: 1e-10,
            max_backtracks: 60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradTol,
    ObjTol,
    /// No descent step could be found even along the steepest-descent direction.
    Stalled,
    MaxIter,
}

#[derive(Debug, Clone)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub n_iter: usize,
    pub termination: Termination,
    /// Objective after every accepted step, starting with the initial value.
    pub trace: Vec<f64>,
}

impl BfgsResult {
    pub fn converged(&self) -> bool {
        self.termination != Termination::MaxIter
    }

    pub fn grad_norm(&self) -> f64 {
        inf_norm(&self.grad)
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `fg`, which returns the objective and its gradient.
pub fn minimize<F>(mut fg: F, x0: &[f64], opts: &BfgsOptions) -> Result<BfgsResult>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut f, mut g) = fg(&x);
    if !f.is_finite() {
        return Err(Error::numerical(
            "bfgs",
            format!("objective is not finite at the starting point ({f})"),
        ));
    }
    let mut trace = vec![f];
    if n == 0 {
        return Ok(BfgsResult {
            x,
            f,
            grad: g,
            n_iter: 0,
            termination: Termination::GradTol,
            trace,
        });
    }

    let identity = |h: &mut Vec<f64>| {
        h.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            h[i * n + i] = 1.0;
        }
    };
    let mut h = vec![0.0; n * n];
    identity(&mut h);
    let mut fresh = true;
    let mut small_steps = 0;
    let mut termination = Termination::MaxIter;
    let mut iter = 0;
    let mut d = vec![0.0; n];
    let mut trial = vec![0.0; n];

    while iter < opts.max_iter {
        if inf_norm(&g) < opts.grad_tol {
            termination = Termination::GradTol;
            break;
        }
        iter += 1;

        let mut accepted = None;
        loop {
            for i in 0..n {
                d[i] = -dot(&h[i * n..(i + 1) * n], &g);
            }
            let mut slope = dot(&g, &d);
            if !(slope < 0.0) || !slope.is_finite() {
                identity(&mut h);
                fresh = true;
                d.iter_mut().zip(&g).for_each(|(di, gi)| *di = -gi);
                slope = -dot(&g, &g);
            }
            let mut step = if fresh {
                (1.0 / inf_norm(&g)).min(1.0)
            } else {
                1.0
            };
            for _ in 0..opts.max_backtracks {
                for i in 0..n {
                    trial[i] = x[i] + step * d[i];
                }
                let (ft, gt) = fg(&trial);
                if ft.is_finite() && ft <= f + 1e-4 * step * slope {
                    accepted = Some((ft, gt));
                    break;
                }
                step *= 0.5;
            }
            if accepted.is_some() || fresh {
                break;
            }
            // retry once along steepest descent before giving up
            identity(&mut h);
            fresh = true;
        }

        let Some((f_new, g_new)) = accepted else {
            termination = Termination::Stalled;
            break;
        };

        let s: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let ys = dot(&y, &s);
        let yy = dot(&y, &y);
        if ys > 1e-10 * dot(&s, &s).sqrt() * yy.sqrt() && ys > 0.0 {
            if fresh {
                let scale = ys / yy;
                identity(&mut h);
                h.iter_mut().for_each(|v| *v *= scale);
            }
            let rho = 1.0 / ys;
            let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], &y)).collect();
            let yhy = dot(&y, &hy);
            let coef = (1.0 + rho * yhy) * rho;
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += coef * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
                }
            }
            fresh = false;
        }

        let change = (f - f_new).abs();
        x.copy_from_slice(&trial);
        f = f_new;
        g = g_new;
        trace.push(f);

        if change <= opts.obj_tol * f.abs().max(1.0) {
            small_steps += 1;
            if small_steps >= 2 {
                termination = Termination::ObjTol;
                break;
            }
        } else {
            small_steps = 0;
        }
    }
    if termination == Termination::MaxIter && inf_norm(&g) < opts.grad_tol {
        termination = Termination::GradTol;
    }

    Ok(BfgsResult {
        x,
        f,
        grad: g,
        n_iter: iter,
        termination,
        trace,
    })
}
