//! Counterfactual state margins with estimated effects removed from treated
//! counties and treatment imputed where it is unknown.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::quantile;
use crate::rng::{stream, with_threads};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreatmentStatus {
    Treated,
    Control,
    /// No grant records for the county's state.
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountyVotes {
    pub unit: String,
    pub state: String,
    pub dem_votes: f64,
    pub rep_votes: f64,
    pub vap: f64,
    pub treated: TreatmentStatus,
    pub lag_dem_share: f64,
}

impl CountyVotes {
    /// Checks counts are finite and nonnegative; turnout above the
    /// voting-age population only warns.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("dem_votes", self.dem_votes), ("rep_votes", self.rep_votes), ("vap", self.vap)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::DataError(format!("{}: {name} = {v}", self.unit)));
            }
        }
        if self.dem_votes + self.rep_votes > self.vap {
            log::warn!(
                "{}: two-party votes {} exceed voting-age population {}",
                self.unit,
                self.dem_votes + self.rep_votes,
                self.vap
            );
        }
        Ok(())
    }
}

fn clamp_share(v: f64, what: &str, unit: &str) -> f64 {
    if !(0.0..=1.0).contains(&v) {
        log::warn!("{unit}: counterfactual {what} {v} clamped to [0, 1]");
    }
    v.clamp(0.0, 1.0)
}

/// Lowers turnout share `(dem+rep)/vap` by `tau_turnout` and two-party Dem
/// share by `tau_dvs` (both in percentage points), then rebuilds the votes
/// as `dem' = vap·t'·d'`, `rep' = vap·t'·(1−d')`.
pub fn remove_effects(county: &CountyVotes, tau_turnout: f64, tau_dvs: f64) -> Result<CountyVotes> {
    if county.treated != TreatmentStatus::Treated {
        return Err(Error::Precondition(format!(
            "{}: effects can only be removed from treated counties",
            county.unit
        )));
    }
    if county.vap <= 0.0 {
        return Err(Error::DataError(format!("{}: voting-age population is {}", county.unit, county.vap)));
    }
    if tau_turnout == 0.0 && tau_dvs == 0.0 {
        return Ok(county.clone());
    }
    let total = county.dem_votes + county.rep_votes;
    let t = total / county.vap;
    let d = if total > 0.0 { county.dem_votes / total } else { 0.5 };
    let t_new = clamp_share(t - tau_turnout / 100.0, "turnout", &county.unit);
    let d_new = clamp_share(d - tau_dvs / 100.0, "Democratic share", &county.unit);
    Ok(CountyVotes {
        dem_votes: county.vap * t_new * d_new,
        rep_votes: county.vap * t_new * (1.0 - d_new),
        ..county.clone()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    Logistic,
    /// Linear probability fallback, used under separation.
    Linear,
}

/// Treatment probability as a function of lagged Democratic share.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreatmentModel {
    pub method: FitMethod,
    pub intercept: f64,
    pub slope: f64,
    pub se_intercept: f64,
    pub se_slope: f64,
    pub n: usize,
}

pub const PROB_FLOOR: f64 = 0.001;
pub const PROB_CEIL: f64 = 0.999;

impl TreatmentModel {
    pub fn probability(&self, lag_dem_share: f64) -> f64 {
        let eta = self.intercept + self.slope * lag_dem_share;
        let p = match self.method {
            FitMethod::Logistic => 1.0 / (1.0 + (-eta).exp()),
            FitMethod::Linear => eta,
        };
        p.clamp(PROB_FLOOR, PROB_CEIL)
    }
}

/// Fits `P(treated) = logistic(a + b·x)` by IRLS. Separated data, where the
/// likelihood has no finite maximizer, fall back to least squares.
pub fn fit_treatment_model(x: &[f64], treated: &[bool]) -> Result<TreatmentModel> {
    if x.len() != treated.len() || x.len() < 2 {
        return Err(Error::Precondition("treatment model needs at least two known counties".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::DataError("lagged Democratic share must be finite".into()));
    }
    if separated(x, treated) {
        log::info!("treatment is separated by lagged Democratic share; using a linear probability fit");
        return linear_fit(x, treated);
    }
    match logistic_fit(x, treated) {
        Some(m) => Ok(m),
        None => {
            log::info!("logistic fit did not converge; using a linear probability fit");
            linear_fit(x, treated)
        }
    }
}

/// With one regressor, the MLE is infinite exactly when some threshold on
/// `x` splits the classes (ties included) or only one class is present.
fn separated(x: &[f64], y: &[bool]) -> bool {
    let range = |cls: bool| {
        x.iter()
            .zip(y)
            .filter(|(_, &t)| t == cls)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (&v, _)| (lo.min(v), hi.max(v)))
    };
    let (lo1, hi1) = range(true);
    let (lo0, hi0) = range(false);
    lo1.is_infinite() || lo0.is_infinite() || hi0 <= lo1 || hi1 <= lo0
}

fn logistic_fit(x: &[f64], y: &[bool]) -> Option<TreatmentModel> {
    let mut beta = Vector2::zeros();
    for _ in 0..100 {
        let mut info = Matrix2::zeros();
        let mut score = Vector2::zeros();
        for (&xi, &yi) in x.iter().zip(y) {
            let z = Vector2::new(1.0, xi);
            let p = 1.0 / (1.0 + (-beta.dot(&z)).exp());
            info += z * z.transpose() * (p * (1.0 - p));
            score += z * (f64::from(u8::from(yi)) - p);
        }
        let step = info.try_inverse()? * score;
        beta += step;
        if !beta.iter().all(|b| b.is_finite()) {
            return None;
        }
        if step.amax() <= 1e-12 * (1.0 + beta.amax()) {
            let mut info = Matrix2::zeros();
            for &xi in x {
                let z = Vector2::new(1.0, xi);
                let p = 1.0 / (1.0 + (-beta.dot(&z)).exp());
                info += z * z.transpose() * (p * (1.0 - p));
            }
            let cov = info.try_inverse()?;
            return Some(TreatmentModel {
                method: FitMethod::Logistic,
                intercept: beta[0],
                slope: beta[1],
                se_intercept: cov[(0, 0)].sqrt(),
                se_slope: cov[(1, 1)].sqrt(),
                n: x.len(),
            });
        }
    }
    None
}

fn linear_fit(x: &[f64], y: &[bool]) -> Result<TreatmentModel> {
    let n = x.len() as f64;
    let yv: Vec<f64> = y.iter().map(|&t| f64::from(u8::from(t))).collect();
    let mx = x.iter().sum::<f64>() / n;
    let my = yv.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(&yv).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ssr: f64 = x.iter().zip(&yv).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let s2 = if x.len() > 2 { ssr / (n - 2.0) } else { 0.0 };
    let se_slope = if sxx > 0.0 { (s2 / sxx).sqrt() } else { 0.0 };
    let se_intercept = (s2 * (1.0 / n + if sxx > 0.0 { mx * mx / sxx } else { 0.0 })).sqrt();
    Ok(TreatmentModel {
        method: FitMethod::Linear,
        intercept,
        slope,
        se_intercept,
        se_slope,
        n: x.len(),
    })
}

/// Fits the treatment model on counties with known status.
pub fn fit_on_known(counties: &[CountyVotes]) -> Result<TreatmentModel> {
    let known: Vec<&CountyVotes> = counties.iter().filter(|c| c.treated != TreatmentStatus::Unknown).collect();
    let x: Vec<f64> = known.iter().map(|c| c.lag_dem_share).collect();
    let y: Vec<bool> = known.iter().map(|c| c.treated == TreatmentStatus::Treated).collect();
    fit_treatment_model(&x, &y)
}

/// Treatment assignment for every county in draw `draw`: known statuses
/// are kept, unknown ones are Bernoulli draws from `stream(seed, draw)`.
pub fn impute_treatment(counties: &[CountyVotes], model: &TreatmentModel, seed: u64, draw: u64) -> Vec<bool> {
    let mut rng = stream(seed, draw);
    counties
        .iter()
        .map(|c| match c.treated {
            TreatmentStatus::Treated => true,
            TreatmentStatus::Control => false,
            TreatmentStatus::Unknown => rng.gen::<f64>() < model.probability(c.lag_dem_share),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationOptions {
    pub draws: usize,
    pub seed: u64,
    /// Worker threads; `0` uses the ambient pool. Never changes results.
    pub threads: usize,
    /// Keep every draw's state margins in the result.
    pub keep_draws: bool,
}

impl SimulationOptions {
    pub fn new(draws: usize, seed: u64) -> Self {
        Self {
            draws,
            seed,
            threads: 0,
            keep_draws: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateSummary {
    pub state: String,
    /// Two-party Democratic margin, percentage points.
    pub observed_margin: f64,
    pub mean_margin: f64,
    pub margin_p025: f64,
    pub margin_p975: f64,
    /// Share of draws whose margin has the opposite strict sign.
    pub flip_probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationResult {
    pub states: Vec<StateSummary>,
    pub draws: usize,
    pub seed: u64,
    pub tau_turnout: f64,
    pub tau_dvs: f64,
    pub model: Option<TreatmentModel>,
    /// `draw_margins[d][s]` follows the order of `states`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub draw_margins: Option<Vec<Vec<f64>>>,
}

/// Two-party Democratic margin per state, in percentage points.
pub fn state_margins(counties: &[CountyVotes]) -> BTreeMap<String, f64> {
    let mut totals: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    for c in counties {
        let e = totals.entry(c.state.clone()).or_insert((0.0, 0.0));
        e.0 += c.dem_votes;
        e.1 += c.rep_votes;
    }
    totals
        .into_iter()
        .map(|(s, (d, r))| {
            let m = if d + r > 0.0 { 100.0 * (d - r) / (d + r) } else { 0.0 };
            (s, m)
        })
        .collect()
}

fn counterfactual(counties: &[CountyVotes], assignment: &[bool], tau_turnout: f64, tau_dvs: f64) -> Result<Vec<CountyVotes>> {
    counties
        .iter()
        .zip(assignment)
        .map(|(c, &treated)| {
            if treated {
                let as_treated = CountyVotes {
                    treated: TreatmentStatus::Treated,
                    ..c.clone()
                };
                remove_effects(&as_treated, tau_turnout, tau_dvs)
            } else {
                Ok(c.clone())
            }
        })
        .collect()
}

/// Per draw: impute unknown treatment, remove the effects from treated
/// counties, and aggregate two-party margins by state.
pub fn simulate_margins(
    counties: &[CountyVotes],
    tau_turnout: f64,
    tau_dvs: f64,
    opts: &SimulationOptions,
) -> Result<SimulationResult> {
    if counties.is_empty() {
        return Err(Error::Precondition("no counties to simulate".into()));
    }
    if opts.draws == 0 {
        return Err(Error::Precondition("need at least one draw".into()));
    }
    for c in counties {
        c.validate()?;
    }
    let model = if counties.iter().any(|c| c.treated == TreatmentStatus::Unknown) {
        Some(fit_on_known(counties)?)
    } else {
        None
    };
    let observed = state_margins(counties);
    let draws: Vec<Result<Vec<f64>>> = with_threads(opts.threads, || {
        (0..opts.draws)
            .into_par_iter()
            .map(|d| {
                let assignment = match &model {
                    Some(m) => impute_treatment(counties, m, opts.seed, d as u64),
                    None => counties.iter().map(|c| c.treated == TreatmentStatus::Treated).collect(),
                };
                let cf = counterfactual(counties, &assignment, tau_turnout, tau_dvs)?;
                Ok(state_margins(&cf).into_values().collect())
            })
            .collect()
    });
    let draws: Vec<Vec<f64>> = draws.into_iter().collect::<Result<_>>()?;

    let states = observed
        .iter()
        .enumerate()
        .map(|(s, (state, &obs))| {
            let mut m: Vec<f64> = draws.iter().map(|d| d[s]).collect();
            let flips = m.iter().filter(|&&v| v * obs < 0.0).count();
            let mean = m.iter().sum::<f64>() / m.len() as f64;
            m.sort_by(f64::total_cmp);
            StateSummary {
                state: state.clone(),
                observed_margin: obs,
                mean_margin: mean,
                margin_p025: quantile(&m, 0.025),
                margin_p975: quantile(&m, 0.975),
                flip_probability: flips as f64 / m.len() as f64,
            }
        })
        .collect();
    Ok(SimulationResult {
        states,
        draws: opts.draws,
        seed: opts.seed,
        tau_turnout,
        tau_dvs,
        model,
        draw_margins: opts.keep_draws.then_some(draws),
    })
}

/// Column names for the county vote file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CountySchema {
    pub unit: String,
    pub state: String,
    pub dem_votes: String,
    pub rep_votes: String,
    pub vap: String,
    pub treated: String,
    pub lag_dem_share: String,
}

impl Default for CountySchema {
    fn default() -> Self {
        Self {
            unit: "unit".into(),
            state: "state".into(),
            dem_votes: "dem_votes".into(),
            rep_votes: "rep_votes".into(),
            vap: "vap".into(),
            treated: "treated".into(),
            lag_dem_share: "lag_dem_share".into(),
        }
    }
}

fn parse_status(s: &str) -> Option<TreatmentStatus> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" => Some(TreatmentStatus::Treated),
        "0" | "false" | "no" => Some(TreatmentStatus::Control),
        "unknown" | "na" | "" => Some(TreatmentStatus::Unknown),
        _ => None,
    }
}

pub fn load_counties<R: Read>(reader: R, schema: &CountySchema) -> Result<Vec<CountyVotes>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let idx = [
        col(&schema.unit)?,
        col(&schema.state)?,
        col(&schema.dem_votes)?,
        col(&schema.rep_votes)?,
        col(&schema.vap)?,
        col(&schema.treated)?,
        col(&schema.lag_dem_share)?,
    ];
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = row + 2;
        let num = |k: usize, name: &str| -> Result<f64> {
            rec[idx[k]].parse::<f64>().map_err(|e| Error::ParseError {
                row,
                column: name.to_string(),
                message: e.to_string(),
            })
        };
        let treated = parse_status(&rec[idx[5]]).ok_or_else(|| Error::ParseError {
            row,
            column: schema.treated.clone(),
            message: format!("expected 1/0/true/false/unknown, got {:?}", &rec[idx[5]]),
        })?;
        let county = CountyVotes {
            unit: rec[idx[0]].to_string(),
            state: rec[idx[1]].to_string(),
            dem_votes: num(2, &schema.dem_votes)?,
            rep_votes: num(3, &schema.rep_votes)?,
            vap: num(4, &schema.vap)?,
            treated,
            lag_dem_share: num(6, &schema.lag_dem_share)?,
        };
        county.validate()?;
        out.push(county);
    }
    Ok(out)
}

pub fn load_counties_path(path: &Path, schema: &CountySchema) -> Result<Vec<CountyVotes>> {
    load_counties(std::fs::File::open(path)?, schema)
}

/// Per-state summary as CSV, states in sorted order.
pub fn write_summary_csv<W: Write>(result: &SimulationResult, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "state",
        "observed_margin",
        "mean_margin",
        "margin_p025",
        "margin_p975",
        "flip_probability",
    ])?;
    for s in &result.states {
        w.write_record([
            s.state.clone(),
            s.observed_margin.to_string(),
            s.mean_margin.to_string(),
            s.margin_p025.to_string(),
            s.margin_p975.to_string(),
            s.flip_probability.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
