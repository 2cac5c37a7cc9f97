//! Weighted two-way fixed-effects estimation and the estimator-variant
//! matrix (unit weighting scheme × time weighting scheme).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{check_design, group_trends, PanelDataset, TreatmentDesign};
use crate::weights::{
    compute_zeta, entropy_balance, solve_regularized_sc, solve_time_weights, solve_unit_weights,
    solve_unit_weights_no_intercept, RegularizedScSolution, ScPenalty, SolverOptions, TimeWeightSolution,
    UnitWeightSolution, ZetaParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitScheme {
    Uniform,
    Sdid,
    SdidNoIntercept,
    Entropy,
    RegularizedSc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeScheme {
    Uniform,
    Sdid,
}

impl UnitScheme {
    pub fn name(self) -> &'static str {
        match self {
            UnitScheme::Uniform => "uniform",
            UnitScheme::Sdid => "sdid",
            UnitScheme::SdidNoIntercept => "sdid_no_intercept",
            UnitScheme::Entropy => "entropy",
            UnitScheme::RegularizedSc => "regularized_sc",
        }
    }
}

impl TimeScheme {
    pub fn name(self) -> &'static str {
        match self {
            TimeScheme::Uniform => "uniform",
            TimeScheme::Sdid => "sdid",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub unit: UnitScheme,
    pub time: TimeScheme,
}

impl EstimatorSpec {
    pub const DID: EstimatorSpec = EstimatorSpec::new(UnitScheme::Uniform, TimeScheme::Uniform);
    pub const SDID: EstimatorSpec = EstimatorSpec::new(UnitScheme::Sdid, TimeScheme::Sdid);

    pub const fn new(unit: UnitScheme, time: TimeScheme) -> Self {
        Self { unit, time }
    }

    /// Plain DiD, time weights only, unit weights only, both.
    pub fn four_variants() -> [EstimatorSpec; 4] {
        [
            Self::DID,
            Self::new(UnitScheme::Uniform, TimeScheme::Sdid),
            Self::new(UnitScheme::Sdid, TimeScheme::Uniform),
            Self::SDID,
        ]
    }

    pub fn label(&self) -> String {
        format!("{}/{}", self.unit.name(), self.time.name())
    }

    pub fn fixed_effects(&self) -> FixedEffects {
        match self.unit {
            UnitScheme::SdidNoIntercept => FixedEffects::TimeOnly,
            _ => FixedEffects::TwoWay,
        }
    }
}

impl std::fmt::Display for EstimatorSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedEffects {
    /// Unit and period effects.
    TwoWay,
    /// Period effects only; balances levels rather than trends.
    TimeOnly,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EstimateOptions {
    pub solver: SolverOptions,
    pub sc_penalty: ScPenalty,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub converged: bool,
    pub fixed_effects: FixedEffects,
    /// Treated mean minus counterfactual in each pre-period.
    pub pre_fit_gaps: Vec<f64>,
    pub pre_fit_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateResult {
    pub tau: f64,
    pub spec: EstimatorSpec,
    pub zeta: Option<ZetaParams>,
    pub unit_solution: Option<UnitWeightSolution>,
    pub time_solution: Option<TimeWeightSolution>,
    pub sc_solution: Option<RegularizedScSolution>,
    /// Control-unit weights as used, in `design.control_units()` order.
    pub control_weights: Vec<f64>,
    /// Pre-period weights as used.
    pub time_weights: Vec<f64>,
    /// Level adjustment added to the weighted control series so that the
    /// time-weighted pre-period gap is zero (zero without unit effects).
    pub level_shift: f64,
    pub n_treated: usize,
    pub n_control: usize,
    pub n_obs: usize,
    pub diagnostics: Diagnostics,
}

fn check_weights(panel: &PanelDataset, design: &TreatmentDesign, unit_w: &[f64], time_w: &[f64]) -> Result<()> {
    check_design(panel, design)?;
    if unit_w.len() != panel.n_units() || time_w.len() != panel.n_periods() {
        return Err(Error::Precondition(format!(
            "expected {} unit and {} period weights, got {} and {}",
            panel.n_units(),
            panel.n_periods(),
            unit_w.len(),
            time_w.len()
        )));
    }
    if let Some(w) = unit_w.iter().chain(time_w).find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(Error::Precondition(format!("regression weight {w} is not a finite nonnegative number")));
    }
    let cell = |units: bool| -> f64 {
        (0..panel.n_units())
            .filter(|&i| design.is_treated(i) == units)
            .map(|i| unit_w[i])
            .sum()
    };
    let t_pre = design.t_pre();
    if cell(true) <= 0.0 {
        return Err(Error::DegenerateWeights("treated"));
    }
    if cell(false) <= 0.0 {
        return Err(Error::DegenerateWeights("control"));
    }
    if time_w[..t_pre].iter().sum::<f64>() <= 0.0 {
        return Err(Error::DegenerateWeights("pre-period"));
    }
    if time_w[t_pre..].iter().sum::<f64>() <= 0.0 {
        return Err(Error::DegenerateWeights("post-period"));
    }
    Ok(())
}

/// `argmin_{τ,α,β} Σ_i Σ_t (Y_it − α_i − β_t − W_it τ)² ω_i λ_t`.
///
/// `unit_weights` and `time_weights` cover every unit and period.
pub fn weighted_twfe(panel: &PanelDataset, design: &TreatmentDesign, unit_weights: &[f64], time_weights: &[f64]) -> Result<f64> {
    weighted_fe_regression(panel, design, unit_weights, time_weights, FixedEffects::TwoWay)
}

/// Weighted least squares of the outcome on the treatment indicator after
/// absorbing the requested fixed effects by iterated weighted demeaning.
pub fn weighted_fe_regression(
    panel: &PanelDataset,
    design: &TreatmentDesign,
    unit_weights: &[f64],
    time_weights: &[f64],
    fe: FixedEffects,
) -> Result<f64> {
    check_weights(panel, design, unit_weights, time_weights)?;
    let (n, t) = (panel.n_units(), panel.n_periods());
    let mut y: Vec<f64> = (0..n).flat_map(|i| panel.row(i).iter().copied()).collect();
    let mut w: Vec<f64> = (0..n * t).map(|k| f64::from(u8::from(design.w(k / t, k % t)))).collect();
    let scale = y.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    demean(&mut y, n, t, unit_weights, time_weights, fe, 1e-12 * scale);
    demean(&mut w, n, t, unit_weights, time_weights, fe, 1e-12);

    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..n {
        for s in 0..t {
            let v = unit_weights[i] * time_weights[s];
            num += v * w[i * t + s] * y[i * t + s];
            den += v * w[i * t + s] * w[i * t + s];
        }
    }
    if den <= 0.0 {
        return Err(Error::DegenerateWeights("treated post-period"));
    }
    Ok(num / den)
}

/// Alternating weighted projections onto unit and period effects. Means are
/// taken relative to the first element so constant slices demean to exact zeros.
fn demean(x: &mut [f64], n: usize, t: usize, unit_w: &[f64], time_w: &[f64], fe: FixedEffects, tol: f64) {
    let time_total: f64 = time_w.iter().sum();
    let unit_total: f64 = unit_w.iter().sum();
    for _ in 0..1_000 {
        let mut change = 0.0f64;
        if fe == FixedEffects::TwoWay {
            for i in 0..n {
                let row = &mut x[i * t..(i + 1) * t];
                let x0 = row[0];
                let m = x0 + row.iter().zip(time_w).map(|(v, b)| (v - x0) * b).sum::<f64>() / time_total;
                row.iter_mut().for_each(|v| *v -= m);
                change = change.max(m.abs());
            }
        }
        for s in 0..t {
            let x0 = x[s];
            let m = x0 + (0..n).map(|i| unit_w[i] * (x[i * t + s] - x0)).sum::<f64>() / unit_total;
            for i in 0..n {
                x[i * t + s] -= m;
            }
            change = change.max(m.abs());
        }
        if fe == FixedEffects::TimeOnly || change <= tol {
            return;
        }
    }
}

/// Weighted double difference of cell means; equals [`weighted_twfe`] for
/// block designs. Weights are normalized within each of the four cells.
pub fn closed_form_tau(panel: &PanelDataset, design: &TreatmentDesign, unit_weights: &[f64], time_weights: &[f64]) -> Result<f64> {
    check_weights(panel, design, unit_weights, time_weights)?;
    let t_pre = design.t_pre();
    let arm = |treated: bool| -> Vec<(usize, f64)> {
        let idx: Vec<usize> = (0..panel.n_units()).filter(|&i| design.is_treated(i) == treated).collect();
        let total: f64 = idx.iter().map(|&i| unit_weights[i]).sum();
        idx.into_iter().map(|i| (i, unit_weights[i] / total)).collect()
    };
    let pre_total: f64 = time_weights[..t_pre].iter().sum();
    let post_total: f64 = time_weights[t_pre..].iter().sum();
    let diff = |units: &[(usize, f64)]| -> f64 {
        units
            .iter()
            .map(|&(i, wi)| {
                let row = panel.row(i);
                let post = (t_pre..row.len()).map(|s| time_weights[s] * row[s]).sum::<f64>() / post_total;
                let pre = (0..t_pre).map(|s| time_weights[s] * row[s]).sum::<f64>() / pre_total;
                wi * (post - pre)
            })
            .sum()
    };
    Ok(diff(&arm(true)) - diff(&arm(false)))
}

/// Per-unit regression weights: `1/N_tr` for treated units, `omega` for
/// controls (in control order).
fn full_unit_weights(design: &TreatmentDesign, omega: &[f64]) -> Vec<f64> {
    let n_tr = design.n_treated() as f64;
    let mut controls = omega.iter();
    design
        .treated_flags()
        .iter()
        .map(|&tr| if tr { 1.0 / n_tr } else { *controls.next().expect("one weight per control") })
        .collect()
}

/// Per-period regression weights: `lambda` over the pre-period, `1/T_post` after.
fn full_time_weights(design: &TreatmentDesign, lambda: &[f64]) -> Vec<f64> {
    let post = 1.0 / design.t_post() as f64;
    lambda.iter().copied().chain(std::iter::repeat_n(post, design.t_post())).collect()
}

fn arm_mean(panel: &PanelDataset, units: &[usize], t: usize) -> f64 {
    units.iter().map(|&i| panel.y(i, t)).sum::<f64>() / units.len() as f64
}

fn weighted_control(panel: &PanelDataset, controls: &[usize], omega: &[f64], t: usize) -> f64 {
    controls.iter().zip(omega).map(|(&i, w)| w * panel.y(i, t)).sum()
}

/// Solves the weights requested by `spec` and runs the weighted regression.
pub fn estimate(panel: &PanelDataset, design: &TreatmentDesign, spec: EstimatorSpec, opts: &EstimateOptions) -> Result<EstimateResult> {
    check_design(panel, design)?;
    let n_co = design.n_control();
    let t_pre = design.t_pre();

    let time_solution = match spec.time {
        TimeScheme::Uniform => None,
        TimeScheme::Sdid => Some(solve_time_weights(panel, design, &opts.solver)?),
    };
    let lambda: Vec<f64> = match &time_solution {
        Some(s) => s.lambda.as_slice().to_vec(),
        None => vec![1.0 / t_pre as f64; t_pre],
    };

    let mut zeta = None;
    let mut unit_solution = None;
    let mut sc_solution = None;
    let omega: Vec<f64> = match spec.unit {
        UnitScheme::Uniform => vec![1.0 / n_co as f64; n_co],
        UnitScheme::Sdid | UnitScheme::SdidNoIntercept => {
            let z = compute_zeta(panel, design)?;
            let sol = if spec.unit == UnitScheme::Sdid {
                solve_unit_weights(panel, design, z.zeta, &opts.solver)?
            } else {
                solve_unit_weights_no_intercept(panel, design, z.zeta, &opts.solver)?
            };
            zeta = Some(z);
            let w = sol.omega.as_slice().to_vec();
            unit_solution = Some(sol);
            w
        }
        UnitScheme::Entropy => entropy_balance(panel, design)?.into_vec(),
        UnitScheme::RegularizedSc => {
            let sol = solve_regularized_sc(panel, design, opts.sc_penalty)?;
            let w = sol.weights.clone();
            sc_solution = Some(sol);
            w
        }
    };

    let treated = design.treated_units();
    let controls = design.control_units();
    let fixed_effects = spec.fixed_effects();
    let level_shift = match fixed_effects {
        FixedEffects::TimeOnly => 0.0,
        FixedEffects::TwoWay => (0..t_pre)
            .map(|t| lambda[t] * (arm_mean(panel, &treated, t) - weighted_control(panel, &controls, &omega, t)))
            .sum(),
    };

    let tau = if spec.unit == UnitScheme::RegularizedSc {
        // Signed weights cannot act as regression weights; use the
        // equivalent difference of the treated post mean and the shifted
        // synthetic control.
        let t_post = design.t_post() as f64;
        (t_pre..panel.n_periods())
            .map(|t| arm_mean(panel, &treated, t) - weighted_control(panel, &controls, &omega, t) - level_shift)
            .sum::<f64>()
            / t_post
    } else {
        weighted_fe_regression(
            panel,
            design,
            &full_unit_weights(design, &omega),
            &full_time_weights(design, &lambda),
            fixed_effects,
        )?
    };

    let pre_fit_gaps: Vec<f64> = (0..t_pre)
        .map(|t| arm_mean(panel, &treated, t) - weighted_control(panel, &controls, &omega, t) - level_shift)
        .collect();
    let pre_fit_rmse = (pre_fit_gaps.iter().map(|g| g * g).sum::<f64>() / t_pre as f64).sqrt();
    let converged = unit_solution.as_ref().is_none_or(|s| s.converged) && time_solution.as_ref().is_none_or(|s| s.converged);

    Ok(EstimateResult {
        tau,
        spec,
        zeta,
        unit_solution,
        time_solution,
        sc_solution,
        control_weights: omega,
        time_weights: lambda,
        level_shift,
        n_treated: design.n_treated(),
        n_control: n_co,
        n_obs: panel.n_units() * panel.n_periods(),
        diagnostics: Diagnostics {
            converged,
            fixed_effects,
            pre_fit_gaps,
            pre_fit_rmse,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendKind {
    /// Weighted, level-shifted synthetic control series.
    Counterfactual,
    /// Unweighted control-arm mean (uniform unit weights).
    ControlMean,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterfactualTrend {
    pub periods: Vec<i64>,
    pub treated: Vec<f64>,
    pub counterfactual: Vec<f64>,
    pub kind: TrendKind,
}

/// Treated-arm mean and the synthetic counterfactual implied by `result`.
pub fn counterfactual_trend(panel: &PanelDataset, design: &TreatmentDesign, result: &EstimateResult) -> Result<CounterfactualTrend> {
    check_design(panel, design)?;
    if result.spec.unit == UnitScheme::Uniform {
        let g = group_trends(panel, design)?;
        return Ok(CounterfactualTrend {
            periods: g.periods,
            treated: g.treated,
            counterfactual: g.control,
            kind: TrendKind::ControlMean,
        });
    }
    if result.control_weights.len() != design.n_control() {
        return Err(Error::Precondition("estimate does not match this design".into()));
    }
    let treated = design.treated_units();
    let controls = design.control_units();
    Ok(CounterfactualTrend {
        periods: panel.periods().to_vec(),
        treated: (0..panel.n_periods()).map(|t| arm_mean(panel, &treated, t)).collect(),
        counterfactual: (0..panel.n_periods())
            .map(|t| weighted_control(panel, &controls, &result.control_weights, t) + result.level_shift)
            .collect(),
        kind: TrendKind::Counterfactual,
    })
}
