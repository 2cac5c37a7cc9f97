//! One function per subcommand. Jobs run sequentially; each writes its
//! tables and sidecars into the output directory.

use std::path::PathBuf;

use sdid_core::estimators::{counterfactual_trend, estimate, EstimateOptions, EstimateResult, TrendKind, UnitScheme};
use sdid_core::inference::{block_bootstrap, placebo_panel, BootstrapOptions, BootstrapResult};
use sdid_core::panel::{group_trends, load_panel, subset, PanelDataset, TreatmentDesign};
use sdid_core::regression::{binned_scatter, fe_ols, DataTable, Term};
use sdid_core::simulation::{load_counties, simulate_margins, SimulationOptions};

use crate::config::{Loaded, PanelInput, SpecName};
use crate::error::{CliError, CliResult, Kind};
use crate::report::{emit, sha256_hex, Cell, EstimateRecord, InputDigest, Provenance, Table};

struct PanelData {
    panel: PanelDataset,
    design: TreatmentDesign,
    input: InputDigest,
}

pub struct Runner {
    cfg: Loaded,
    panel: Option<PanelData>,
    pub written: Vec<PathBuf>,
}

fn read_input(cfg: &Loaded, path: &std::path::Path, role: &str) -> CliResult<(Vec<u8>, InputDigest)> {
    let full = cfg.resolve(path);
    let bytes = std::fs::read(&full)
        .map_err(|e| CliError::new(Kind::Data, format!("cannot read {role} input {}: {e}", full.display())))?;
    let digest = InputDigest {
        role: role.to_string(),
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    };
    Ok((bytes, digest))
}

fn load_panel_input(cfg: &Loaded, input: &PanelInput, role: &str) -> CliResult<PanelData> {
    let (bytes, digest) = read_input(cfg, &input.path, role)?;
    let (panel, design) = load_panel(bytes.as_slice(), &input.schema).map_err(|e| CliError::from(e).context(role))?;
    Ok(PanelData {
        panel,
        design,
        input: digest,
    })
}

fn label_file(spec: &SpecName) -> String {
    format!("{}_{}", spec.0.unit.name(), spec.0.time.name())
}

fn weight_flag(name: &str) -> Cell {
    if name == "uniform" {
        "no".into()
    } else {
        name.into()
    }
}

/// Decisions shared by every job that estimates on a panel.
fn estimator_decisions(prov: &mut Provenance, opts: &EstimateOptions, specs: &[SpecName]) {
    prov.decide(
        "zeta",
        "(N_tr * T_post)^(1/4) * sample sd (n-1 denominator) of control first differences over the pre-period",
    );
    prov.decide("time_weight_ridge", "1e-6 * sigma_hat^2 * N_co");
    prov.decide("weight_intercepts", "unit and time intercepts are unrestricted reals");
    prov.decide(
        "regression",
        "weighted two-way fixed effects; sdid_no_intercept absorbs period effects only",
    );
    if specs.iter().any(|s| s.0.unit == UnitScheme::RegularizedSc) {
        prov.decide(
            "regularized_sc_penalty",
            serde_json::to_string(&opts.sc_penalty).unwrap_or_default(),
        );
        prov.decide("regularized_sc_tau", "treated mean minus synthetic control, post minus pre average");
    }
    if specs.iter().any(|s| s.0.unit == UnitScheme::Entropy) {
        prov.decide("entropy_balance", "exact balance on every pre-period treated mean");
    }
}

fn bootstrap_decisions(prov: &mut Provenance, b: &BootstrapResult) {
    prov.decide(
        "bootstrap",
        format!(
            "unit-block resampling with replacement; single-arm resamples redrawn; {}",
            b.diagnostics.resolve_policy
        ),
    );
    prov.decide("confidence_interval", "tau +/- 1.96 * bootstrap se");
    prov.decide("threads", "results do not depend on the worker thread count");
}

struct Fitted {
    spec: SpecName,
    fit: EstimateResult,
    boot: Option<BootstrapResult>,
}

/// One column per spec, weight flags in the footer.
fn estimate_table(rows: &[Fitted]) -> Table {
    let mut t = Table::new(std::iter::once("statistic".to_string()).chain(rows.iter().map(|r| r.spec.to_string())));
    let stat = |name: &str, f: &dyn Fn(&Fitted) -> Cell| -> Vec<Cell> {
        std::iter::once(Cell::from(name)).chain(rows.iter().map(f)).collect()
    };
    t.row(stat("tau", &|r| r.fit.tau.into()));
    if rows.iter().any(|r| r.boot.is_some()) {
        let opt = |f: fn(&BootstrapResult) -> f64| move |r: &Fitted| r.boot.as_ref().map_or(Cell::Empty, |b| f(b).into());
        t.row(stat("se", &opt(|b| b.se)));
        t.row(stat("ci_low", &opt(|b| b.ci_low)));
        t.row(stat("ci_high", &opt(|b| b.ci_high)));
    }
    t.row(stat("pre_fit_rmse", &|r| r.fit.diagnostics.pre_fit_rmse.into()));
    t.row(stat("n_treated", &|r| r.fit.n_treated.into()));
    t.row(stat("n_control", &|r| r.fit.n_control.into()));
    t.row(stat("n_obs", &|r| r.fit.n_obs.into()));
    t.footer(stat("unit_weights", &|r| weight_flag(r.spec.0.unit.name())));
    t.footer(stat("time_weights", &|r| weight_flag(r.spec.0.time.name())));
    t
}

impl Runner {
    pub fn new(cfg: Loaded) -> Self {
        Self {
            cfg,
            panel: None,
            written: Vec::new(),
        }
    }

    fn out(&self) -> PathBuf {
        self.cfg.config.out.clone()
    }

    fn provenance(&self, command: &str) -> Provenance {
        let mut p = Provenance::new(command, &self.cfg.digest);
        if let Some(s) = self.cfg.seed_override {
            p.decide("seed_override", s.to_string());
        }
        p
    }

    fn write(&mut self, name: &str, table: &Table, prov: Provenance) -> CliResult<()> {
        let path = emit(&self.out(), name, table, prov)?;
        self.written.push(path);
        Ok(())
    }

    fn panel(&mut self) -> CliResult<&PanelData> {
        if self.panel.is_none() {
            let input = self
                .cfg
                .config
                .panel
                .clone()
                .ok_or_else(|| CliError::config("this command needs a [panel] section"))?;
            self.panel = Some(load_panel_input(&self.cfg, &input, "panel")?);
        }
        Ok(self.panel.as_ref().expect("loaded above"))
    }

    fn estimate_options(&self) -> EstimateOptions {
        EstimateOptions {
            sc_penalty: self.cfg.config.estimate.sc_penalty,
            ..EstimateOptions::default()
        }
    }

    fn bootstrap_options(&self) -> CliResult<Option<BootstrapOptions>> {
        let Some(b) = &self.cfg.config.bootstrap else {
            return Ok(None);
        };
        let mut o = BootstrapOptions::new(b.replicates, self.cfg.bootstrap_seed()?);
        o.threads = self.cfg.config.threads;
        o.estimate = self.estimate_options();
        Ok(Some(o))
    }

    fn fit_all(
        &self,
        panel: &PanelDataset,
        design: &TreatmentDesign,
        specs: &[SpecName],
        boot: Option<&BootstrapOptions>,
        job: &str,
    ) -> CliResult<Vec<Fitted>> {
        let opts = self.estimate_options();
        specs
            .iter()
            .map(|&spec| {
                let ctx = |e: sdid_core::Error| CliError::from(e).context(format!("{job} {spec}"));
                let fit = estimate(panel, design, spec.0, &opts).map_err(ctx)?;
                let boot = boot.map(|b| block_bootstrap(panel, design, spec.0, b)).transpose().map_err(ctx)?;
                Ok(Fitted { spec, fit, boot })
            })
            .collect()
    }

    fn record(prov: &mut Provenance, rows: &[Fitted], prefix: &str) {
        for r in rows {
            prov.estimates.push(EstimateRecord::new(format!("{prefix}{}", r.spec), &r.fit));
        }
        if let Some(b) = rows.iter().find_map(|r| r.boot.as_ref()) {
            bootstrap_decisions(prov, b);
        }
    }

    pub fn validate(&mut self) -> CliResult<String> {
        let mut lines = Vec::new();
        let cfg = self.cfg.clone();
        if cfg.config.panel.is_some() {
            let p = self.panel()?;
            let (panel, design) = (&p.panel, &p.design);
            lines.push(format!(
                "panel: {} units ({} treated, {} control), {} periods ({} pre, {} post)",
                panel.n_units(),
                design.n_treated(),
                design.n_control(),
                panel.n_periods(),
                design.t_pre(),
                design.t_post()
            ));
            if let Some(pl) = &cfg.config.placebo {
                placebo_panel(panel, design, pl.drop_last).map_err(|e| CliError::from(e).context("placebo"))?;
                lines.push(format!("placebo: drop_last {} ok", pl.drop_last));
            }
            for s in &cfg.config.subgroup {
                let (_, d) = subset(panel, design, &s.predicate).map_err(|e| CliError::from(e).context(format!("subgroup {}", s.name)))?;
                lines.push(format!("subgroup {}: {} treated, {} control", s.name, d.n_treated(), d.n_control()));
            }
        }
        if let Some(s) = &cfg.config.selection {
            let (bytes, _) = read_input(&cfg, &s.path, "selection")?;
            let table = DataTable::from_csv(bytes.as_slice()).map_err(|e| CliError::from(e).context("selection"))?;
            let mut names = vec![s.outcome.clone()];
            names.extend(s.terms.iter().flat_map(|t| Term::parse(t).factors));
            names.extend(s.fixed_effects.iter().cloned());
            if let Some(b) = &s.binned {
                names.extend([b.x.clone(), b.y.clone()]);
            }
            for n in &names {
                table.column(n).map_err(|e| CliError::from(e).context("selection"))?;
            }
            lines.push(format!("selection: {} rows", table.n_rows()));
        }
        if let Some(s) = &cfg.config.simulation {
            let (bytes, _) = read_input(&cfg, &s.path, "simulation")?;
            let counties = load_counties(bytes.as_slice(), &s.schema).map_err(|e| CliError::from(e).context("simulation"))?;
            lines.push(format!("simulation: {} counties", counties.len()));
            if let Some(t) = &s.turnout_panel {
                load_panel_input(&cfg, t, "turnout_panel")?;
            }
            if let Some(t) = &s.dvs_panel {
                load_panel_input(&cfg, t, "dvs_panel")?;
            }
        }
        lines.push("config ok".to_string());
        Ok(lines.join("\n"))
    }

    pub fn estimate(&mut self) -> CliResult<()> {
        let specs = self.cfg.config.estimate.specs.clone();
        self.panel()?;
        let p = self.panel.as_ref().expect("loaded");
        let rows = self.fit_all(&p.panel, &p.design, &specs, None, "estimate")?;
        let mut prov = self.provenance("estimate");
        prov.inputs.push(p.input.clone());
        estimator_decisions(&mut prov, &self.estimate_options(), &specs);
        Self::record(&mut prov, &rows, "");
        self.write("estimate", &estimate_table(&rows), prov)
    }

    pub fn bootstrap(&mut self) -> CliResult<()> {
        let b = self
            .cfg
            .config
            .bootstrap
            .clone()
            .ok_or_else(|| CliError::config("this command needs a [bootstrap] section"))?;
        let opts = self.bootstrap_options()?.expect("section present");
        self.panel()?;
        let p = self.panel.as_ref().expect("loaded");
        let rows = self.fit_all(&p.panel, &p.design, &b.specs, Some(&opts), "bootstrap")?;
        let mut prov = self.provenance("bootstrap");
        prov.inputs.push(p.input.clone());
        prov.seeds.insert("bootstrap".into(), opts.seed);
        estimator_decisions(&mut prov, &opts.estimate, &b.specs);
        Self::record(&mut prov, &rows, "");
        prov.details = serde_json::json!({
            "replicates": opts.replicates,
            "redrawn": rows.iter().map(|r| r.boot.as_ref().map_or(0, |b| b.n_redrawn)).collect::<Vec<_>>(),
            "percentile_interval": rows.iter().map(|r| {
                r.boot.as_ref().map(|b| [b.diagnostics.percentile_low, b.diagnostics.percentile_high])
            }).collect::<Vec<_>>(),
        });
        let mut reps = Table::new(std::iter::once("replicate".to_string()).chain(rows.iter().map(|r| r.spec.to_string())));
        for k in 0..opts.replicates {
            let mut row = vec![Cell::from(k)];
            row.extend(rows.iter().map(|r| Cell::from(r.boot.as_ref().expect("bootstrapped").replicates[k])));
            reps.row(row);
        }
        let table = estimate_table(&rows);
        self.write("bootstrap", &table, prov.clone())?;
        prov.command = "bootstrap_replicates".into();
        self.write("bootstrap_replicates", &reps, prov)
    }

    pub fn placebo(&mut self) -> CliResult<()> {
        let drop_last = self
            .cfg
            .config
            .placebo
            .as_ref()
            .ok_or_else(|| CliError::config("this command needs a [placebo] section"))?
            .drop_last;
        let specs = self.cfg.placebo_specs();
        let boot = self.bootstrap_options()?;
        self.panel()?;
        let p = self.panel.as_ref().expect("loaded");
        let (pp, pd) = placebo_panel(&p.panel, &p.design, drop_last).map_err(|e| CliError::from(e).context("placebo"))?;
        let rows = self.fit_all(&pp, &pd, &specs, boot.as_ref(), "placebo")?;
        let mut prov = self.provenance("placebo");
        prov.inputs.push(p.input.clone());
        if let Some(b) = &boot {
            prov.seeds.insert("bootstrap".into(), b.seed);
        }
        estimator_decisions(&mut prov, &self.estimate_options(), &specs);
        prov.decide(
            "placebo",
            format!("last {drop_last} period(s) dropped; the final T_post retained periods are relabeled as treated"),
        );
        Self::record(&mut prov, &rows, "");
        self.write("placebo", &estimate_table(&rows), prov)
    }

    pub fn subgroup(&mut self) -> CliResult<()> {
        let groups = self.cfg.config.subgroup.clone();
        if groups.is_empty() {
            return Err(CliError::config("this command needs at least one [[subgroup]] section"));
        }
        let boot = self.bootstrap_options()?;
        self.panel()?;
        let p = self.panel.as_ref().expect("loaded");
        let mut prov = self.provenance("subgroup");
        prov.inputs.push(p.input.clone());
        if let Some(b) = &boot {
            prov.seeds.insert("bootstrap".into(), b.seed);
        }
        let mut columns = vec!["subgroup", "spec", "tau"];
        if boot.is_some() {
            columns.extend(["se", "ci_low", "ci_high"]);
        }
        columns.extend(["n_treated", "n_control"]);
        let mut table = Table::new(columns);
        let mut predicates = serde_json::Map::new();
        for g in &groups {
            let specs = self.cfg.subgroup_specs(g);
            let (sp, sd) = subset(&p.panel, &p.design, &g.predicate).map_err(|e| CliError::from(e).context(format!("subgroup {}", g.name)))?;
            let rows = self.fit_all(&sp, &sd, &specs, boot.as_ref(), &format!("subgroup {}", g.name))?;
            estimator_decisions(&mut prov, &self.estimate_options(), &specs);
            Self::record(&mut prov, &rows, &format!("{}:", g.name));
            for r in &rows {
                let mut row = vec![Cell::from(g.name.as_str()), Cell::from(r.spec.to_string()), r.fit.tau.into()];
                if let Some(b) = &r.boot {
                    row.extend([b.se.into(), b.ci_low.into(), b.ci_high.into()]);
                }
                row.extend([r.fit.n_treated.into(), r.fit.n_control.into()]);
                table.row(row);
            }
            predicates.insert(g.name.clone(), serde_json::to_value(&g.predicate).unwrap_or_default());
        }
        prov.decide(
            "terciles",
            "type-7 sample quantiles; ties at a cut point fall in the lower tercile; treated_tercile keeps every control",
        );
        prov.details = serde_json::json!({ "predicates": predicates });
        self.write("subgroup", &table, prov)
    }

    pub fn selection(&mut self) -> CliResult<()> {
        let s = self
            .cfg
            .config
            .selection
            .clone()
            .ok_or_else(|| CliError::config("this command needs a [selection] section"))?;
        let (bytes, input) = read_input(&self.cfg, &s.path, "selection")?;
        let data = DataTable::from_csv(bytes.as_slice()).map_err(|e| CliError::from(e).context("selection"))?;
        let terms: Vec<Term> = s.terms.iter().map(|t| Term::parse(t)).collect();
        let fit = fe_ols(&data, &s.outcome, &terms, &s.fixed_effects).map_err(|e| CliError::from(e).context("selection"))?;

        let mut table = Table::new(["term", "estimate", "robust_se"]);
        for ((name, b), se) in fit.names.iter().zip(&fit.coefficients).zip(&fit.robust_se) {
            table.row(vec![name.as_str().into(), (*b).into(), (*se).into()]);
        }
        table.footer(vec!["n_obs".into(), fit.n_obs.into(), Cell::Empty]);
        table.footer(vec!["r_squared".into(), fit.r_squared.into(), Cell::Empty]);
        let fe = if fit.fe_groups.is_empty() { "none".to_string() } else { fit.fe_groups.join(" + ") };
        table.footer(vec!["fixed_effects".into(), fe.into(), Cell::Empty]);

        let mut prov = self.provenance("selection");
        prov.inputs.push(input);
        prov.decide("se_type", fit.se_type);
        prov.decide(
            "hc1_parameters",
            "regressors plus absorbed fixed-effect levels (two dimensions: L1 + L2 - connected components)",
        );
        prov.decide("missing_values", "rows with a missing value in any used column are dropped");
        prov.details = serde_json::json!({
            "outcome": s.outcome,
            "n_dropped": fit.n_dropped,
            "n_params": fit.n_params,
            "covariance": fit.covariance,
        });
        self.write("selection", &table, prov.clone())?;

        if let Some(b) = &s.binned {
            let pairs: Vec<(f64, f64)> = {
                let x = data.numeric(&b.x).map_err(|e| CliError::from(e).context("selection.binned"))?;
                let y = data.numeric(&b.y).map_err(|e| CliError::from(e).context("selection.binned"))?;
                x.iter().zip(y).filter_map(|(a, b)| Some(((*a)?, (*b)?))).collect()
            };
            let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let bins = binned_scatter(&x, &y, b.bins).map_err(|e| CliError::from(e).context("selection.binned"))?;
            let mut t = Table::new(["bin", "x_mean", "y_mean", "count"]);
            for (k, bin) in bins.iter().enumerate() {
                t.row(vec![(k + 1).into(), bin.x_mean.into(), bin.y_mean.into(), bin.count.into()]);
            }
            prov.command = "selection_binned".into();
            prov.decide("binning", "equal-count bins by rank of x; the first (rows mod bins) bins hold one extra row");
            prov.details = serde_json::json!({ "x": b.x, "y": b.y, "bins": b.bins });
            self.write("selection_binned", &t, prov)?;
        }
        Ok(())
    }

    pub fn simulate(&mut self) -> CliResult<()> {
        let s = self
            .cfg
            .config
            .simulation
            .clone()
            .ok_or_else(|| CliError::config("this command needs a [simulation] section"))?;
        let seed = self.cfg.simulation_seed()?;
        let mut prov = self.provenance("simulate");
        let (tau_turnout, tau_dvs) = match s.tau_spec {
            Some(spec) => {
                let opts = self.estimate_options();
                let turnout = load_panel_input(&self.cfg, s.turnout_panel.as_ref().expect("validated"), "turnout_panel")?;
                let dvs = match &s.dvs_panel {
                    Some(d) => load_panel_input(&self.cfg, d, "dvs_panel")?,
                    None => {
                        let p = self.panel()?;
                        PanelData {
                            panel: p.panel.clone(),
                            design: p.design.clone(),
                            input: p.input.clone(),
                        }
                    }
                };
                let t = estimate(&turnout.panel, &turnout.design, spec.0, &opts).map_err(|e| CliError::from(e).context("turnout effect"))?;
                let d = estimate(&dvs.panel, &dvs.design, spec.0, &opts).map_err(|e| CliError::from(e).context("vote-share effect"))?;
                prov.inputs.extend([turnout.input, dvs.input]);
                prov.estimates.push(EstimateRecord::new(format!("turnout:{spec}"), &t));
                prov.estimates.push(EstimateRecord::new(format!("dvs:{spec}"), &d));
                estimator_decisions(&mut prov, &opts, &[spec]);
                prov.decide("tau_source", format!("estimated with {spec}"));
                (t.tau, d.tau)
            }
            None => {
                prov.decide("tau_source", "explicit values from the config");
                (s.tau_turnout.expect("validated"), s.tau_dvs.expect("validated"))
            }
        };
        let (bytes, input) = read_input(&self.cfg, &s.path, "counties")?;
        prov.inputs.push(input);
        let counties = load_counties(bytes.as_slice(), &s.schema).map_err(|e| CliError::from(e).context("simulation"))?;
        let mut opts = SimulationOptions::new(s.draws, seed);
        opts.threads = self.cfg.config.threads;
        opts.keep_draws = s.write_draws;
        let result = simulate_margins(&counties, tau_turnout, tau_dvs, &opts).map_err(|e| CliError::from(e).context("simulation"))?;

        let mut table = Table::new(["state", "observed_margin", "mean_margin", "margin_p025", "margin_p975", "flip_probability"]);
        for st in &result.states {
            table.row(vec![
                st.state.as_str().into(),
                st.observed_margin.into(),
                st.mean_margin.into(),
                st.margin_p025.into(),
                st.margin_p975.into(),
                st.flip_probability.into(),
            ]);
        }
        prov.seeds.insert("simulation".into(), seed);
        prov.decide("margins", "two-party Democratic minus Republican share, in percentage points");
        prov.decide("effect_removal", "turnout and Democratic share lowered by tau (pp) in treated counties, clamped to [0, 1]");
        prov.decide("flip", "strict sign change of the state margin; a zero margin is not a flip");
        prov.decide(
            "imputation",
            "unknown treatment drawn from a logistic model on lagged Democratic share, linear probability under separation, probabilities clamped to [0.001, 0.999]",
        );
        prov.details = serde_json::json!({
            "tau_turnout": tau_turnout,
            "tau_dvs": tau_dvs,
            "draws": s.draws,
            "treatment_model": result.model,
        });
        self.write("simulation", &table, prov.clone())?;

        if let Some(draws) = &result.draw_margins {
            let mut t = Table::new(std::iter::once("draw".to_string()).chain(result.states.iter().map(|s| s.state.clone())));
            for (k, d) in draws.iter().enumerate() {
                let mut row = vec![Cell::from(k)];
                row.extend(d.iter().map(|&m| Cell::from(m)));
                t.row(row);
            }
            prov.command = "simulation_draws".into();
            self.write("simulation_draws", &t, prov)?;
        }
        Ok(())
    }

    pub fn export_figures(&mut self) -> CliResult<()> {
        let specs = self.cfg.config.figures.specs.clone();
        let opts = self.estimate_options();
        self.panel()?;
        let p = self.panel.as_ref().expect("loaded");
        let mut base = self.provenance("export-figures");
        base.inputs.push(p.input.clone());

        let arms = group_trends(&p.panel, &p.design).map_err(CliError::from)?;
        let mut t = Table::new(["period", "series", "value"]);
        for (k, &period) in arms.periods.iter().enumerate() {
            t.row(vec![period.to_string().into(), "treated".into(), arms.treated[k].into()]);
            t.row(vec![period.to_string().into(), "control".into(), arms.control[k].into()]);
        }
        let mut prov = base.clone();
        prov.decide("series", "unweighted arm means per period");
        let mut pending = vec![("figure_arm_trends".to_string(), t, prov)];

        for spec in specs {
            let fit = estimate(&p.panel, &p.design, spec.0, &opts).map_err(|e| CliError::from(e).context(format!("figures {spec}")))?;
            let trend = counterfactual_trend(&p.panel, &p.design, &fit).map_err(CliError::from)?;
            let other = match trend.kind {
                TrendKind::Counterfactual => "counterfactual",
                TrendKind::ControlMean => "control",
            };
            let mut t = Table::new(["period", "series", "value"]);
            for (k, &period) in trend.periods.iter().enumerate() {
                t.row(vec![period.to_string().into(), "treated".into(), trend.treated[k].into()]);
                t.row(vec![period.to_string().into(), other.into(), trend.counterfactual[k].into()]);
            }
            let mut prov = base.clone();
            estimator_decisions(&mut prov, &opts, &[spec]);
            prov.estimates.push(EstimateRecord::new(spec.to_string(), &fit));
            prov.decide(
                "series",
                "treated arm mean and the unit-weighted control series shifted by the level adjustment",
            );
            pending.push((format!("figure_trends_{}", label_file(&spec)), t, prov));
        }
        for (name, t, prov) in pending {
            self.write(&name, &t, prov)?;
        }
        Ok(())
    }

    /// Every job the config describes, in a fixed order.
    pub fn run_all(&mut self) -> CliResult<()> {
        self.validate()?;
        let c = self.cfg.config.clone();
        if c.panel.is_some() {
            self.estimate()?;
            if c.bootstrap.is_some() {
                self.bootstrap()?;
            }
            if c.placebo.is_some() {
                self.placebo()?;
            }
            if !c.subgroup.is_empty() {
                self.subgroup()?;
            }
            self.export_figures()?;
        }
        if c.selection.is_some() {
            self.selection()?;
        }
        if c.simulation.is_some() {
            self.simulate()?;
        }
        Ok(())
    }
}
