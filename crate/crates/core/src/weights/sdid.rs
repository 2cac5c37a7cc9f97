//! Unit and time weights for synthetic difference-in-differences.

use serde::Serialize;

use super::simplex::{SimplexLsq, SimplexWeights, SolverOptions};
use crate::error::Result;
use crate::panel::{check_design, PanelDataset, TreatmentDesign};

/// Regularization strength for the unit-weight program.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZetaParams {
    /// Sample standard deviation of control first differences over the
    /// pre-period.
    pub sigma_hat: f64,
    pub zeta: f64,
}

/// `ζ = (N_tr · T_post)^(1/4) · σ̂`.
pub fn compute_zeta(panel: &PanelDataset, design: &TreatmentDesign) -> Result<ZetaParams> {
    check_design(panel, design)?;
    let diffs: Vec<f64> = design
        .control_units()
        .into_iter()
        .flat_map(|i| {
            let row = &panel.row(i)[..design.t_pre()];
            row.windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>()
        })
        .collect();
    let sigma_hat = sample_sd(&diffs);
    let zeta = ((design.n_treated() * design.t_post()) as f64).powf(0.25) * sigma_hat;
    Ok(ZetaParams { sigma_hat, zeta })
}

/// Sample standard deviation (n − 1 denominator); zero for fewer than two values.
pub(crate) fn sample_sd(v: &[f64]) -> f64 {
    sample_var(v).sqrt()
}

pub(crate) fn sample_var(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (v.len() - 1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitWeightSolution {
    pub omega0: f64,
    /// Weights over control units, in `design.control_units()` order.
    pub omega: SimplexWeights,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeWeightSolution {
    pub lambda0: f64,
    /// Weights over the pre-treatment periods.
    pub lambda: SimplexWeights,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Ridge coefficient added for uniqueness: `1e-6 · σ̂² · N_co`, with `σ̂`
    /// as in [`compute_zeta`].
    pub ridge: f64,
}

/// Control pre-period outcomes as a `T_pre × N_co` row-major matrix.
fn control_pre_by_period(panel: &PanelDataset, design: &TreatmentDesign) -> Vec<f64> {
    let controls = design.control_units();
    let mut a = Vec::with_capacity(design.t_pre() * controls.len());
    for t in 0..design.t_pre() {
        a.extend(controls.iter().map(|&i| panel.y(i, t)));
    }
    a
}

fn treated_pre_means(panel: &PanelDataset, design: &TreatmentDesign) -> Vec<f64> {
    let treated = design.treated_units();
    (0..design.t_pre())
        .map(|t| treated.iter().map(|&i| panel.y(i, t)).sum::<f64>() / treated.len() as f64)
        .collect()
}

fn unit_program(
    panel: &PanelDataset,
    design: &TreatmentDesign,
    zeta: f64,
    intercept: bool,
    opts: &SolverOptions,
) -> Result<UnitWeightSolution> {
    check_design(panel, design)?;
    let t_pre = design.t_pre();
    let ridge = zeta * zeta * t_pre as f64;
    let lsq = SimplexLsq::new(
        t_pre,
        design.n_control(),
        control_pre_by_period(panel, design),
        treated_pre_means(panel, design),
        ridge,
        intercept,
    );
    let fit = lsq.solve(opts)?;
    Ok(UnitWeightSolution {
        omega0: fit.intercept,
        omega: SimplexWeights::from_solver(fit.x),
        objective: fit.objective,
        iterations: fit.iterations,
        converged: fit.converged,
    })
}

/// Unit weights matching the treated pre-period trajectory up to a free
/// level shift `ω0`, with ridge penalty `ζ²·T_pre·‖ω‖²`.
pub fn solve_unit_weights(
    panel: &PanelDataset,
    design: &TreatmentDesign,
    zeta: f64,
    opts: &SolverOptions,
) -> Result<UnitWeightSolution> {
    unit_program(panel, design, zeta, true, opts)
}

/// Unit weights matching treated pre-period levels (`ω0 = 0`).
pub fn solve_unit_weights_no_intercept(
    panel: &PanelDataset,
    design: &TreatmentDesign,
    zeta: f64,
    opts: &SolverOptions,
) -> Result<UnitWeightSolution> {
    unit_program(panel, design, zeta, false, opts)
}

/// Time weights over pre-periods whose weighted control outcomes best
/// predict each control's post-period mean, up to a common intercept `λ0`.
pub fn solve_time_weights(
    panel: &PanelDataset,
    design: &TreatmentDesign,
    opts: &SolverOptions,
) -> Result<TimeWeightSolution> {
    check_design(panel, design)?;
    let controls = design.control_units();
    let t_pre = design.t_pre();
    let t_post = design.t_post();
    let mut a = Vec::with_capacity(controls.len() * t_pre);
    let mut b = Vec::with_capacity(controls.len());
    for &i in &controls {
        let row = panel.row(i);
        a.extend_from_slice(&row[..t_pre]);
        b.push(row[t_pre..].iter().sum::<f64>() / t_post as f64);
    }
    let sigma = compute_zeta(panel, design)?.sigma_hat;
    let ridge = 1e-6 * sigma * sigma * controls.len() as f64;
    let lsq = SimplexLsq::new(controls.len(), t_pre, a, b, ridge, true);
    let fit = lsq.solve(opts)?;
    Ok(TimeWeightSolution {
        lambda0: fit.intercept,
        lambda: SimplexWeights::from_solver(fit.x),
        objective: fit.objective,
        iterations: fit.iterations,
        converged: fit.converged,
        ridge,
    })
}
