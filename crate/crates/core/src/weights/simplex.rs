//! Least squares over the probability simplex.
//!
//! Solves `min_{c, x ∈ Δ} ‖c·1 + A x − b‖² + ridge·‖x‖²` (or with `c = 0`) by
//! accelerated projected gradient with adaptive restart. Row constants are
//! removed exactly (the weights sum to one) and the intercept is profiled out
//! by centering.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

/// Nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct SimplexWeights(Vec<f64>);

impl SimplexWeights {
    pub const SUM_TOLERANCE: f64 = 1e-10;

    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Precondition("simplex weights over an empty set".into()));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Precondition(format!("simplex weight {v} outside [0, 1]")));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::Precondition(format!("simplex weights sum to {sum}")));
        }
        Ok(Self(values))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn l2_norm(&self) -> f64 {
        self.0.iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    /// Wraps solver output, trimming rounding noise at the bounds.
    pub(crate) fn from_solver(mut values: Vec<f64>) -> Self {
        for v in &mut values {
            *v = v.clamp(0.0, 1.0);
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > f64::EPSILON * values.len() as f64 {
            values.iter_mut().for_each(|v| *v /= sum);
        }
        Self(values)
    }
}

/// Stopping rule for the iterative weight solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Relative objective decrease below which a plain gradient step counts
    /// as converged.
    pub tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 10_000,
            tol: 1e-10,
        }
    }
}

/// Euclidean projection onto `{x ≥ 0, Σx = 1}` (sort-based).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (k + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    let mut out: Vec<f64> = v.iter().map(|&x| (x - theta).max(0.0)).collect();
    // Rounding can leave the sum a few ulps off one.
    let s: f64 = out.iter().sum();
    if s > 0.0 {
        out.iter_mut().for_each(|x| *x /= s);
    } else {
        out = vec![1.0 / n as f64; n];
    }
    out
}

#[derive(Debug, Clone)]
pub(crate) struct SimplexFit {
    pub x: Vec<f64>,
    pub intercept: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Dense row-major least-squares data for the simplex program.
pub(crate) struct SimplexLsq {
    rows: usize,
    cols: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    ridge: f64,
    intercept: bool,
}

impl SimplexLsq {
    pub fn new(rows: usize, cols: usize, a: Vec<f64>, b: Vec<f64>, ridge: f64, intercept: bool) -> Self {
        debug_assert_eq!(a.len(), rows * cols);
        debug_assert_eq!(b.len(), rows);
        Self {
            rows,
            cols,
            a,
            b,
            ridge,
            intercept,
        }
    }

    /// Objective at `(c, x)` on the original (uncentered) data.
    pub fn objective(&self, intercept: f64, x: &[f64]) -> f64 {
        let fit: f64 = (0..self.rows)
            .map(|r| {
                let row = &self.a[r * self.cols..(r + 1) * self.cols];
                let e = intercept + dot(row, x) - self.b[r];
                e * e
            })
            .sum();
        fit + self.ridge * dot(x, x)
    }

    /// Minimizing intercept for fixed `x`.
    pub fn best_intercept(&self, x: &[f64]) -> f64 {
        if !self.intercept || self.rows == 0 {
            return 0.0;
        }
        (0..self.rows)
            .map(|r| self.b[r] - dot(&self.a[r * self.cols..(r + 1) * self.cols], x))
            .sum::<f64>()
            / self.rows as f64
    }

    pub fn solve(&self, opts: &SolverOptions) -> Result<SimplexFit> {
        let (m, n) = (self.rows, self.cols);
        let (a, b) = self.reduced();

        let lipschitz = 2.0 * (max_eigen_gram(&a, m, n) + self.ridge);
        let scale = dot(&b, &b) + a.iter().map(|v| v * v).sum::<f64>() / n as f64;
        let floor = 1e-6 * scale.max(f64::MIN_POSITIVE);

        let mut resid = vec![0.0; m];
        let mut grad = vec![0.0; n];
        let objective = |x: &[f64], resid: &mut [f64]| -> f64 {
            residual(&a, &b, x, m, n, resid);
            dot(resid, resid) + self.ridge * dot(x, x)
        };

        let mut x = vec![1.0 / n as f64; n];
        let mut fx = objective(&x, &mut resid);
        if lipschitz <= 0.0 || n == 1 {
            return Ok(self.finish(x, 0, true));
        }
        let step = 1.0 / lipschitz;
        let mut y = x.clone();
        let mut t = 1.0_f64;
        let mut momentum = false;

        for iter in 1..=opts.max_iter {
            residual(&a, &b, &y, m, n, &mut resid);
            gradient(&a, &resid, &y, self.ridge, m, n, &mut grad);
            let trial: Vec<f64> = y.iter().zip(&grad).map(|(yi, gi)| yi - step * gi).collect();
            let x_new = project_simplex(&trial);
            let f_new = objective(&x_new, &mut resid);

            if f_new > fx {
                if !momentum {
                    // A plain projected-gradient step cannot increase the
                    // objective; an increase here is rounding at the optimum.
                    return Ok(self.finish(x, iter, true));
                }
                // Momentum overshot: restart from the current iterate.
                y.copy_from_slice(&x);
                t = 1.0;
                momentum = false;
                continue;
            }
            let decrease = fx - f_new;
            let small = decrease <= opts.tol * fx.abs().max(floor);
            if small && !momentum {
                x = x_new;
                return Ok(self.finish(x, iter, true));
            }
            if small {
                // Confirm with a plain gradient step before declaring convergence.
                x = x_new;
                fx = f_new;
                y.copy_from_slice(&x);
                t = 1.0;
                momentum = false;
                continue;
            }
            let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let beta = (t - 1.0) / t_new;
            for k in 0..n {
                y[k] = x_new[k] + beta * (x_new[k] - x[k]);
            }
            momentum = beta > 0.0;
            x = x_new;
            fx = f_new;
            t = t_new;
        }
        let fit = self.finish(x, opts.max_iter, false);
        Err(Error::ConvergenceError {
            iterations: fit.iterations,
            objective: fit.objective,
            last_iterate: fit.x,
        })
    }

    fn finish(&self, x: Vec<f64>, iterations: usize, converged: bool) -> SimplexFit {
        let intercept = self.best_intercept(&x);
        SimplexFit {
            objective: self.objective(intercept, &x),
            intercept,
            x,
            iterations,
            converged,
        }
    }

    /// Equivalent data with row constants removed (exact because `Σx = 1`)
    /// and, with an intercept, column means removed.
    fn reduced(&self) -> (Vec<f64>, Vec<f64>) {
        let (m, n) = (self.rows, self.cols);
        let mut a = self.a.clone();
        let mut b = self.b.clone();
        for r in 0..m {
            let row = &mut a[r * n..(r + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            row.iter_mut().for_each(|v| *v -= mean);
            b[r] -= mean;
        }
        if self.intercept {
            for j in 0..n {
                let mean = (0..m).map(|r| a[r * n + j]).sum::<f64>() / m as f64;
                for r in 0..m {
                    a[r * n + j] -= mean;
                }
            }
            let mean_b = b.iter().sum::<f64>() / m as f64;
            b.iter_mut().for_each(|v| *v -= mean_b);
        }
        (a, b)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn residual(a: &[f64], b: &[f64], x: &[f64], m: usize, n: usize, out: &mut [f64]) {
    for r in 0..m {
        out[r] = dot(&a[r * n..(r + 1) * n], x) - b[r];
    }
}

fn gradient(a: &[f64], resid: &[f64], x: &[f64], ridge: f64, m: usize, n: usize, out: &mut [f64]) {
    for (o, xi) in out.iter_mut().zip(x) {
        *o = 2.0 * ridge * xi;
    }
    for r in 0..m {
        let e = 2.0 * resid[r];
        if e == 0.0 {
            continue;
        }
        for (o, ai) in out.iter_mut().zip(&a[r * n..(r + 1) * n]) {
            *o += e * ai;
        }
    }
}

/// Largest eigenvalue of `AᵀA`, computed on the smaller Gram matrix.
fn max_eigen_gram(a: &[f64], m: usize, n: usize) -> f64 {
    let mat = DMatrix::from_row_slice(m, n, a);
    let gram = if m <= n { &mat * mat.transpose() } else { mat.transpose() * &mat };
    gram.symmetric_eigenvalues().iter().copied().fold(0.0, f64::max)
}
