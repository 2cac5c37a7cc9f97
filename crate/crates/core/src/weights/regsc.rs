//! Synthetic control with an intercept and an elastic-net penalty, without
//! the simplex constraint.
//!
//! Objective: `Σ_t (μ + Σ_i w_i Y_it − m_t)² + l1·‖w‖₁ + l2·‖w‖²` over the
//! pre-period, solved by cyclic coordinate descent with `μ` profiled out.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sdid::sample_var;
use super::simplex::dot;
use crate::error::{Error, Result};
use crate::panel::{check_design, PanelDataset, TreatmentDesign};

pub const CV_GRID_SIZE: usize = 20;
const MAX_SWEEPS: usize = 100_000;
const CD_TOL: f64 = 1e-12;
const KKT_TOL: f64 = 1e-10;
const POLISH_EVERY: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScPenalty {
    Fixed { l1: f64, l2: f64 },
    /// Leave-one-pre-period-out cross-validation over a log grid.
    Cv,
}

impl Default for ScPenalty {
    fn default() -> Self {
        ScPenalty::Cv
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularizedScSolution {
    pub intercept: f64,
    /// Control weights in `design.control_units()` order; any sign.
    pub weights: Vec<f64>,
    pub l1: f64,
    pub l2: f64,
    pub objective: f64,
    pub sweeps: usize,
    /// Mean held-out squared error of the chosen penalties when
    /// cross-validated.
    pub cv_error: Option<f64>,
}

pub fn solve_regularized_sc(
    panel: &PanelDataset,
    design: &TreatmentDesign,
    penalty: ScPenalty,
) -> Result<RegularizedScSolution> {
    check_design(panel, design)?;
    let controls = design.control_units();
    let treated = design.treated_units();
    let t_pre = design.t_pre();
    // Pre-period design as T_pre rows of N_co values.
    let x: Vec<Vec<f64>> = (0..t_pre).map(|t| controls.iter().map(|&i| panel.y(i, t)).collect()).collect();
    let y: Vec<f64> = (0..t_pre)
        .map(|t| treated.iter().map(|&i| panel.y(i, t)).sum::<f64>() / treated.len() as f64)
        .collect();

    let (l1, l2, cv_error) = match penalty {
        ScPenalty::Fixed { l1, l2 } => {
            if !(l1 >= 0.0 && l2 >= 0.0) {
                return Err(Error::Precondition(format!("penalties must be nonnegative, got l1={l1}, l2={l2}")));
            }
            (l1, l2, None)
        }
        ScPenalty::Cv => {
            let all: Vec<f64> = x.iter().flatten().copied().collect();
            let mut scale = sample_var(&all);
            if scale <= 0.0 {
                scale = 1.0;
            }
            let (l1, l2, err) = cross_validate(&x, &y, &penalty_grid(scale))?;
            (l1, l2, Some(err))
        }
    };
    let fit = elastic_net(&x, &y, l1, l2)?;
    Ok(RegularizedScSolution {
        intercept: fit.intercept,
        weights: fit.w,
        l1,
        l2,
        objective: fit.objective,
        sweeps: fit.sweeps,
        cv_error,
    })
}

/// `CV_GRID_SIZE` log-spaced values from `1e-4·scale` to `1e2·scale`.
pub fn penalty_grid(scale: f64) -> Vec<f64> {
    let (lo, hi) = ((1e-4 * scale).ln(), (1e2 * scale).ln());
    (0..CV_GRID_SIZE)
        .map(|k| (lo + (hi - lo) * k as f64 / (CV_GRID_SIZE - 1) as f64).exp())
        .collect()
}

fn cross_validate(x: &[Vec<f64>], y: &[f64], grid: &[f64]) -> Result<(f64, f64, f64)> {
    // Strongest penalties first so that ties resolve toward more shrinkage.
    let combos: Vec<(f64, f64)> = grid
        .iter()
        .rev()
        .flat_map(|&l1| grid.iter().rev().map(move |&l2| (l1, l2)))
        .collect();
    let errors: Vec<f64> = combos
        .par_iter()
        .map(|&(l1, l2)| {
            let mut total = 0.0;
            for held in 0..y.len() {
                let xs: Vec<Vec<f64>> = x.iter().enumerate().filter(|(t, _)| *t != held).map(|(_, r)| r.clone()).collect();
                let ys: Vec<f64> = y.iter().enumerate().filter(|(t, _)| *t != held).map(|(_, v)| *v).collect();
                let fit = elastic_net(&xs, &ys, l1, l2)?;
                let e = fit.intercept + dot(&x[held], &fit.w) - y[held];
                total += e * e;
            }
            Ok(total / y.len() as f64)
        })
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (k, e) in errors.iter().enumerate() {
        if *e < errors[best] {
            best = k;
        }
    }
    Ok((combos[best].0, combos[best].1, errors[best]))
}

pub(crate) struct NetFit {
    pub intercept: f64,
    pub w: Vec<f64>,
    pub objective: f64,
    pub sweeps: usize,
}

fn soft_threshold(v: f64, k: f64) -> f64 {
    if v > k {
        v - k
    } else if v < -k {
        v + k
    } else {
        0.0
    }
}

/// Largest violation of the elastic-net optimality conditions.
fn kkt_violation(cols: &[Vec<f64>], resid: &[f64], w: &[f64], l1: f64, l2: f64) -> f64 {
    cols.iter()
        .zip(w)
        .map(|(c, &wj)| {
            let g = -2.0 * dot(c, resid) + 2.0 * l2 * wj;
            if wj != 0.0 {
                (g + l1 * wj.signum()).abs()
            } else {
                (g.abs() - l1).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

fn residual(cols: &[Vec<f64>], y: &[f64], w: &[f64]) -> Vec<f64> {
    let mut resid = y.to_vec();
    for (c, &v) in cols.iter().zip(w) {
        if v != 0.0 {
            for (r, x) in resid.iter_mut().zip(c) {
                *r -= v * x;
            }
        }
    }
    resid
}

fn net_objective(cols: &[Vec<f64>], y: &[f64], w: &[f64], l1: f64, l2: f64) -> f64 {
    let r = residual(cols, y, w);
    dot(&r, &r) + l1 * w.iter().map(|v| v.abs()).sum::<f64>() + l2 * dot(w, w)
}

/// Minimizer of the smooth objective with `|w_j|` replaced by `θ_j·w_j` on
/// the coordinates where `θ_j ≠ 0`.
fn signed_solve(cols: &[Vec<f64>], y: &[f64], theta: &[f64], l1: f64, l2: f64) -> Option<Vec<f64>> {
    let active: Vec<usize> = (0..theta.len()).filter(|&j| theta[j] != 0.0).collect();
    let k = active.len();
    let mut out = vec![0.0; theta.len()];
    if k == 0 {
        return Some(out);
    }
    let gram = DMatrix::from_fn(k, k, |a, b| {
        dot(&cols[active[a]], &cols[active[b]]) + if a == b { l2 } else { 0.0 }
    });
    let rhs = DVector::from_fn(k, |a, _| dot(&cols[active[a]], y) - 0.5 * l1 * theta[active[a]]);
    let sol = gram.lu().solve(&rhs)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    for (a, &j) in active.iter().enumerate() {
        out[j] = sol[a];
    }
    Some(out)
}

/// Feature-sign active-set search started from `w`. Each step solves the
/// sign-fixed problem on the active set and line-searches toward it over
/// the points where a coefficient crosses zero, so the objective never
/// increases and the search ends at an exact minimizer.
fn feature_sign(cols: &[Vec<f64>], y: &[f64], w: &[f64], l1: f64, l2: f64, tol: f64) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = w.len();
    let mut w = w.to_vec();
    let mut current = net_objective(cols, y, &w, l1, l2);
    for _ in 0..(10 * n + 50) {
        let resid = residual(cols, y, &w);
        let grad: Vec<f64> = cols.iter().zip(&w).map(|(c, &wj)| -2.0 * dot(c, &resid) + 2.0 * l2 * wj).collect();
        let active_gap = (0..n)
            .filter(|&j| w[j] != 0.0)
            .map(|j| (grad[j] + l1 * w[j].signum()).abs())
            .fold(0.0, f64::max);
        let (entering, inactive_gap) = (0..n)
            .filter(|&j| w[j] == 0.0)
            .map(|j| (j, grad[j].abs() - l1))
            .fold((None, 0.0), |(bj, bv), (j, v)| if v > bv { (Some(j), v) } else { (bj, bv) });
        if active_gap <= tol && inactive_gap <= tol {
            return Some((w, resid));
        }
        let mut theta: Vec<f64> = w.iter().map(|&v| if v == 0.0 { 0.0 } else { v.signum() }).collect();
        if active_gap <= tol {
            let j = entering?;
            theta[j] = -grad[j].signum();
        }
        let target = signed_solve(cols, y, &theta, l1, l2)?;
        let mut steps: Vec<f64> = (0..n)
            .filter(|&j| w[j] != 0.0 && target[j].signum() != w[j].signum())
            .map(|j| w[j] / (w[j] - target[j]))
            .filter(|t| *t > 0.0 && *t < 1.0)
            .collect();
        steps.push(1.0);
        let mut best: Option<(f64, Vec<f64>)> = None;
        for t in steps {
            let cand: Vec<f64> = (0..n)
                .map(|j| {
                    let v = w[j] + t * (target[j] - w[j]);
                    // Snap exact crossings; the sign-fixed model is only valid up to them.
                    if w[j] != 0.0 && (t - w[j] / (w[j] - target[j])).abs() <= 1e-12 {
                        0.0
                    } else {
                        v
                    }
                })
                .collect();
            let f = net_objective(cols, y, &cand, l1, l2);
            if best.as_ref().map_or(true, |(bf, _)| f < *bf) {
                best = Some((f, cand));
            }
        }
        let (f, cand) = best?;
        if f > current {
            return None;
        }
        if cand == w {
            return None;
        }
        current = f;
        w = cand;
    }
    None
}

/// Elastic net with a free intercept on rows `x[t]` and targets `y[t]`.
pub(crate) fn elastic_net(x: &[Vec<f64>], y: &[f64], l1: f64, l2: f64) -> Result<NetFit> {
    let m = y.len();
    let n = x.first().map_or(0, Vec::len);
    let col_mean: Vec<f64> = (0..n).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / m as f64).collect();
    let y_mean = y.iter().sum::<f64>() / m as f64;
    // Centered columns, stored column-major.
    let cols: Vec<Vec<f64>> = (0..n).map(|j| x.iter().map(|r| r[j] - col_mean[j]).collect()).collect();
    let sq: Vec<f64> = cols.iter().map(|c| dot(c, c)).collect();
    let centered_y: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let mut resid = centered_y.clone();
    let scale = dot(&resid, &resid).sqrt().max(f64::MIN_POSITIVE);
    let mut w = vec![0.0; n];
    let kkt_scale = 2.0 * sq.iter().copied().fold(0.0, f64::max).sqrt() * scale;

    let mut sweeps = 0;
    let mut converged = n == 0;
    while !converged && sweeps < MAX_SWEEPS {
        sweeps += 1;
        let mut max_change = 0.0f64;
        for j in 0..n {
            let denom = sq[j] + l2;
            let new = if denom > 0.0 {
                let rho = dot(&cols[j], &resid) + sq[j] * w[j];
                soft_threshold(2.0 * rho, l1) / (2.0 * denom)
            } else {
                0.0
            };
            let delta = new - w[j];
            if delta != 0.0 {
                for (r, c) in resid.iter_mut().zip(&cols[j]) {
                    *r -= delta * c;
                }
                w[j] = new;
                max_change = max_change.max(delta.abs() * sq[j].sqrt());
            }
        }
        converged = max_change <= CD_TOL * scale || kkt_violation(&cols, &resid, &w, l1, l2) <= KKT_TOL * kkt_scale;
        if !converged && sweeps % POLISH_EVERY == 0 {
            if let Some((w_fs, r_fs)) = feature_sign(&cols, &centered_y, &w, l1, l2, KKT_TOL * kkt_scale) {
                w = w_fs;
                resid = r_fs;
                converged = true;
            }
        }
    }
    let intercept = y_mean - dot(&col_mean, &w);
    let fit_err: f64 = x
        .iter()
        .zip(y)
        .map(|(r, v)| {
            let e = intercept + dot(r, &w) - v;
            e * e
        })
        .sum();
    let objective = fit_err + l1 * w.iter().map(|v| v.abs()).sum::<f64>() + l2 * dot(&w, &w);
    if !converged {
        return Err(Error::ConvergenceError {
            iterations: sweeps,
            objective,
            last_iterate: w,
        });
    }
    Ok(NetFit {
        intercept,
        w,
        objective,
        sweeps,
    })
}
