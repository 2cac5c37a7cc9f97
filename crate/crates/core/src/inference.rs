//! Unit-block bootstrap and placebo backdating.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{estimate, EstimateOptions, EstimateResult, EstimatorSpec};
use crate::panel::{check_design, quantile, PanelDataset, TreatmentDesign};
use crate::rng::{stream, with_threads};
use crate::weights::sample_sd;

/// Consecutive one-armed draws tolerated before giving up on a replicate.
pub const MAX_REDRAWS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapOptions {
    pub replicates: usize,
    pub seed: u64,
    /// Worker threads; `0` uses the ambient pool. Never changes results.
    pub threads: usize,
    pub estimate: EstimateOptions,
}

impl BootstrapOptions {
    pub fn new(replicates: usize, seed: u64) -> Self {
        Self {
            replicates,
            seed,
            threads: 0,
            estimate: EstimateOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapDiagnostics {
    pub percentile_low: f64,
    pub percentile_high: f64,
    /// How ζ and the weights are handled inside each replicate.
    pub resolve_policy: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapResult {
    /// Full-sample point estimate the interval is centered on.
    pub tau: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Replicate estimates, indexed by replicate number.
    pub replicates: Vec<f64>,
    pub n_requested: usize,
    pub n_completed: usize,
    pub n_redrawn: usize,
    pub seed: u64,
    pub diagnostics: BootstrapDiagnostics,
}

/// Resamples whole unit rows with replacement; each unit keeps its
/// treatment label. Replicate `r` draws from `stream(seed, r)`.
pub fn block_bootstrap(
    panel: &PanelDataset,
    design: &TreatmentDesign,
    spec: EstimatorSpec,
    opts: &BootstrapOptions,
) -> Result<BootstrapResult> {
    check_design(panel, design)?;
    if opts.replicates < 2 {
        return Err(Error::Precondition(format!(
            "bootstrap needs at least 2 replicates, got {}",
            opts.replicates
        )));
    }
    let point = estimate(panel, design, spec, &opts.estimate)?;
    let draws: Vec<Result<(f64, usize)>> = with_threads(opts.threads, || {
        (0..opts.replicates)
            .into_par_iter()
            .map(|r| replicate(panel, design, spec, opts, r))
            .collect()
    });
    let mut replicates = Vec::with_capacity(opts.replicates);
    let mut n_redrawn = 0;
    for d in draws {
        let (tau, redrawn) = d?;
        replicates.push(tau);
        n_redrawn += redrawn;
    }
    let se = sample_sd(&replicates);
    let mut sorted = replicates.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(BootstrapResult {
        tau: point.tau,
        se,
        ci_low: point.tau - 1.96 * se,
        ci_high: point.tau + 1.96 * se,
        n_requested: opts.replicates,
        n_completed: replicates.len(),
        replicates,
        n_redrawn,
        seed: opts.seed,
        diagnostics: BootstrapDiagnostics {
            percentile_low: quantile(&sorted, 0.025),
            percentile_high: quantile(&sorted, 0.975),
            resolve_policy: "zeta and all weights re-solved in every replicate",
        },
    })
}

fn replicate(
    panel: &PanelDataset,
    design: &TreatmentDesign,
    spec: EstimatorSpec,
    opts: &BootstrapOptions,
    r: usize,
) -> Result<(f64, usize)> {
    let mut rng = stream(opts.seed, r as u64);
    let (idx, redrawn) = draw_units(&mut rng, design.treated_flags(), r)?;
    let flags: Vec<bool> = idx.iter().map(|&i| design.is_treated(i)).collect();
    let sample = panel.select_units(&idx);
    let sample_design = TreatmentDesign::new(flags, design.t_pre(), design.n_periods())?;
    let fit = estimate(&sample, &sample_design, spec, &opts.estimate)?;
    Ok((fit.tau, redrawn))
}

/// Draws `N` unit indices with replacement until both arms are present.
fn draw_units<R: Rng>(rng: &mut R, treated: &[bool], replicate: usize) -> Result<(Vec<usize>, usize)> {
    let n = treated.len();
    let mut redrawn = 0;
    loop {
        let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        let n_tr = idx.iter().filter(|&&i| treated[i]).count();
        if n_tr > 0 && n_tr < n {
            return Ok((idx, redrawn));
        }
        redrawn += 1;
        if redrawn >= MAX_REDRAWS {
            return Err(Error::DegenerateResample {
                replicate,
                attempts: redrawn,
            });
        }
    }
}

/// Panel truncated by `drop_last` periods with the last `T_post` retained
/// periods relabeled as post. All truly treated periods must be dropped.
pub fn placebo_panel(
    panel: &PanelDataset,
    design: &TreatmentDesign,
    drop_last: usize,
) -> Result<(PanelDataset, TreatmentDesign)> {
    check_design(panel, design)?;
    if drop_last < design.t_post() {
        return Err(Error::DesignError(format!(
            "placebo must drop every treated period: drop_last {drop_last} < T_post {}",
            design.t_post()
        )));
    }
    if design.t_pre() < drop_last + 2 {
        return Err(Error::DesignError(format!(
            "placebo leaves {} pre-periods; need at least 2",
            design.t_pre().saturating_sub(drop_last)
        )));
    }
    let keep = design.n_periods() - drop_last;
    let truncated = panel.truncate_periods(keep);
    let placebo = TreatmentDesign::new(design.treated_flags().to_vec(), keep - design.t_post(), keep)?;
    Ok((truncated, placebo))
}

/// Re-runs the full estimator pretending treatment started `drop_last`
/// periods earlier.
pub fn placebo_backdate(
    panel: &PanelDataset,
    design: &TreatmentDesign,
    spec: EstimatorSpec,
    drop_last: usize,
    opts: &EstimateOptions,
) -> Result<EstimateResult> {
    let (p, d) = placebo_panel(panel, design, drop_last)?;
    estimate(&p, &d, spec, opts)
}
