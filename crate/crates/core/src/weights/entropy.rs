//! Entropy balancing of control units on pre-period outcome means.
//!
//! Minimizes `KL(w ‖ uniform)` subject to `Σ_i w_i Y_it = m_t` for every
//! pre-period `t`, where `m_t` is the treated mean. The dual is the smooth
//! convex problem `min_θ log((1/N) Σ_i exp(θ·z_i))` with `z_i = Y_i,pre − m`,
//! solved by damped Newton; the primal weights are `softmax(Zθ)`.

use nalgebra::{DMatrix, DVector};

use super::simplex::{SimplexLsq, SimplexWeights, SolverOptions};
use crate::error::{Error, Result};
use crate::panel::{check_design, PanelDataset, TreatmentDesign};

const MAX_NEWTON: usize = 200;
/// Distance from the target to the control hull, in standardized units,
/// above which the moments count as infeasible.
const HULL_TOL: f64 = 1e-7;

/// Moment-matching control weights (ordered as `design.control_units()`).
pub fn entropy_balance(panel: &PanelDataset, design: &TreatmentDesign) -> Result<SimplexWeights> {
    check_design(panel, design)?;
    let controls = design.control_units();
    let treated = design.treated_units();
    let t_pre = design.t_pre();
    let target: Vec<f64> = (0..t_pre)
        .map(|t| treated.iter().map(|&i| panel.y(i, t)).sum::<f64>() / treated.len() as f64)
        .collect();
    let rows: Vec<Vec<f64>> = controls.iter().map(|&i| panel.row(i)[..t_pre].to_vec()).collect();
    balance(&rows, &target)
}

/// Entropy-balancing weights for arbitrary moment rows `x_i` and target `m`.
pub fn balance(rows: &[Vec<f64>], target: &[f64]) -> Result<SimplexWeights> {
    let n = rows.len();
    let k = target.len();
    if n == 0 {
        return Err(Error::Precondition("entropy balancing needs at least one control".into()));
    }
    let magnitude = rows
        .iter()
        .flatten()
        .chain(target)
        .fold(1.0f64, |acc, v| acc.max(v.abs()));
    let tol = 1e-11 * magnitude;

    // Standardize each moment; constant columns are either satisfied
    // trivially or infeasible.
    let mut cols = Vec::new();
    let mut scales = Vec::new();
    for t in 0..k {
        let z: Vec<f64> = rows.iter().map(|r| r[t] - target[t]).collect();
        let scale = z.iter().map(|v| v * v).sum::<f64>().sqrt() / (n as f64).sqrt();
        let spread = z.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)) - z.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        if spread <= tol {
            if z[0].abs() > tol {
                return Err(Error::InfeasibleBalance);
            }
            continue;
        }
        cols.push(t);
        scales.push(scale);
    }
    if cols.is_empty() {
        return Ok(SimplexWeights::uniform(n));
    }
    let p = cols.len();
    let z = DMatrix::from_fn(n, p, |i, j| (rows[i][cols[j]] - target[cols[j]]) / scales[j]);
    let log_n = (n as f64).ln();

    let mut theta = DVector::<f64>::zeros(p);
    let (mut g, mut w) = dual(&z, &theta);
    for _ in 0..MAX_NEWTON {
        // Weak duality: g(θ) ≥ −KL(w*‖u) ≥ −ln N whenever the moments are
        // feasible, so dropping below that bound certifies infeasibility.
        if g < -log_n - 1e-9 {
            return Err(Error::InfeasibleBalance);
        }
        let grad = z.tr_mul(&w);
        let resid = (0..p).map(|j| (grad[j] * scales[j]).abs()).fold(0.0, f64::max);
        if resid <= tol {
            return Ok(SimplexWeights::from_solver(w.iter().copied().collect()));
        }
        let weighted = DMatrix::from_fn(n, p, |i, j| z[(i, j)] * w[i]);
        let hess = z.tr_mul(&weighted) - &grad * grad.transpose();
        let step = pseudo_solve(&hess, &grad);
        let slope = grad.dot(&step);
        let mut alpha = 1.0;
        loop {
            let cand = &theta - alpha * &step;
            let (g_new, w_new) = dual(&z, &cand);
            // The slack absorbs rounding in g once Newton is near the optimum.
            if g_new <= g - 1e-4 * alpha * slope + 1e-14 * (1.0 + g.abs()) || alpha < 1e-12 {
                theta = cand;
                g = g_new;
                w = w_new;
                break;
            }
            alpha *= 0.5;
        }
    }
    let grad = z.tr_mul(&w);
    let resid = (0..p).map(|j| (grad[j] * scales[j]).abs()).fold(0.0, f64::max);
    if resid <= tol {
        return Ok(SimplexWeights::from_solver(w.iter().copied().collect()));
    }
    // Newton stalls when θ diverges, which happens when the target sits
    // outside (or on the edge of) the control hull.
    if hull_distance(&z) > HULL_TOL {
        return Err(Error::InfeasibleBalance);
    }
    Err(Error::ConvergenceError {
        iterations: MAX_NEWTON,
        objective: g,
        last_iterate: theta.iter().copied().collect(),
    })
}

/// Dual objective `log mean exp(Zθ)` and the induced softmax weights.
fn dual(z: &DMatrix<f64>, theta: &DVector<f64>) -> (f64, DVector<f64>) {
    let s = z * theta;
    let max = s.max();
    let mut e = s.map(|v| (v - max).exp());
    let total = e.sum();
    e /= total;
    let g = max + (total / z.nrows() as f64).ln();
    (g, e)
}

/// `min_{w ∈ Δ} ‖Zᵀw‖`, the distance from the target to the hull of the rows.
fn hull_distance(z: &DMatrix<f64>) -> f64 {
    let (n, p) = z.shape();
    let a: Vec<f64> = (0..p).flat_map(|j| (0..n).map(move |i| z[(i, j)])).collect();
    let lsq = SimplexLsq::new(p, n, a, vec![0.0; p], 0.0, false);
    let opts = SolverOptions { max_iter: 100_000, tol: 1e-12 };
    let objective = match lsq.solve(&opts) {
        Ok(fit) => fit.objective,
        Err(Error::ConvergenceError { objective, .. }) => objective,
        Err(_) => 0.0,
    };
    objective.max(0.0).sqrt()
}

/// Solves `H x = g` through the eigendecomposition, discarding directions
/// with negligible curvature.
fn pseudo_solve(h: &DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    let eig = h.clone().symmetric_eigen();
    let cutoff = eig.eigenvalues.amax() * 1e-12;
    let mut x = DVector::zeros(g.len());
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > cutoff {
            let v = eig.eigenvectors.column(k);
            x += v * (v.dot(g) / lambda);
        }
    }
    if x.iter().all(|v| *v == 0.0) {
        // Flat curvature: fall back to a gradient step.
        return g.clone();
    }
    x
}
