//! Job configuration file (TOML) and command-line overrides.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use sdid_core::estimators::{EstimatorSpec, TimeScheme, UnitScheme};
use sdid_core::panel::{PanelSchema, Predicate};
use sdid_core::simulation::CountySchema;
use sdid_core::weights::ScPenalty;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Estimator spec written as `"unit/time"`, e.g. `"sdid/uniform"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SpecName(pub EstimatorSpec);

impl TryFrom<String> for SpecName {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        let (u, t) = s
            .split_once('/')
            .ok_or_else(|| format!("estimator spec {s:?} must look like \"unit/time\""))?;
        let unit = match u.trim() {
            "uniform" => UnitScheme::Uniform,
            "sdid" => UnitScheme::Sdid,
            "sdid_no_intercept" => UnitScheme::SdidNoIntercept,
            "entropy" => UnitScheme::Entropy,
            "regularized_sc" => UnitScheme::RegularizedSc,
            other => return Err(format!("unknown unit weighting {other:?}")),
        };
        let time = match t.trim() {
            "uniform" => TimeScheme::Uniform,
            "sdid" => TimeScheme::Sdid,
            other => return Err(format!("unknown time weighting {other:?}")),
        };
        Ok(SpecName(EstimatorSpec::new(unit, time)))
    }
}

impl From<SpecName> for String {
    fn from(s: SpecName) -> String {
        s.0.label()
    }
}

impl fmt::Display for SpecName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.label())
    }
}

fn four_variants() -> Vec<SpecName> {
    EstimatorSpec::four_variants().into_iter().map(SpecName).collect()
}

fn sdid_only() -> Vec<SpecName> {
    vec![SpecName(EstimatorSpec::SDID)]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanelInput {
    pub path: PathBuf,
    pub schema: PanelSchema,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateSection {
    #[serde(default = "four_variants")]
    pub specs: Vec<SpecName>,
    #[serde(default)]
    pub sc_penalty: ScPenalty,
}

impl Default for EstimateSection {
    fn default() -> Self {
        Self {
            specs: four_variants(),
            sc_penalty: ScPenalty::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapSection {
    pub replicates: usize,
    pub seed: Option<u64>,
    #[serde(default = "sdid_only")]
    pub specs: Vec<SpecName>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaceboSection {
    #[serde(default = "one")]
    pub drop_last: usize,
    /// Defaults to the `[estimate]` specs.
    pub specs: Option<Vec<SpecName>>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubgroupSection {
    pub name: String,
    pub predicate: Predicate,
    pub specs: Option<Vec<SpecName>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinnedSection {
    pub x: String,
    pub y: String,
    pub bins: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionSection {
    pub path: PathBuf,
    pub outcome: String,
    /// Regressors; `"a:b"` is an interaction.
    pub terms: Vec<String>,
    #[serde(default)]
    pub fixed_effects: Vec<String>,
    pub binned: Option<BinnedSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub path: PathBuf,
    #[serde(default)]
    pub schema: CountySchema,
    pub draws: usize,
    pub seed: Option<u64>,
    /// Explicit effects in percentage points.
    pub tau_turnout: Option<f64>,
    pub tau_dvs: Option<f64>,
    /// Alternatively, estimate both effects with this spec.
    pub tau_spec: Option<SpecName>,
    pub turnout_panel: Option<PanelInput>,
    /// Defaults to `[panel]`.
    pub dvs_panel: Option<PanelInput>,
    #[serde(default)]
    pub write_draws: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiguresSection {
    #[serde(default = "sdid_only")]
    pub specs: Vec<SpecName>,
}

impl Default for FiguresSection {
    fn default() -> Self {
        Self { specs: sdid_only() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    #[serde(default = "default_out")]
    pub out: PathBuf,
    pub seed: Option<u64>,
    #[serde(default)]
    pub threads: usize,
    pub panel: Option<PanelInput>,
    #[serde(default)]
    pub estimate: EstimateSection,
    pub bootstrap: Option<BootstrapSection>,
    pub placebo: Option<PlaceboSection>,
    #[serde(default)]
    pub subgroup: Vec<SubgroupSection>,
    pub selection: Option<SelectionSection>,
    pub simulation: Option<SimulationSection>,
    #[serde(default)]
    pub figures: FiguresSection,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// Command-line values that replace config keys.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

/// Parsed config plus the facts needed to resolve paths and record provenance.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: JobConfig,
    pub dir: PathBuf,
    pub digest: String,
    pub seed_override: Option<u64>,
}

impl Loaded {
    pub fn read(path: &Path, overrides: &Overrides) -> CliResult<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        let text = String::from_utf8(bytes.clone()).map_err(|_| CliError::config("config is not valid UTF-8"))?;
        let mut config: JobConfig =
            toml::from_str(&text).map_err(|e| CliError::config(format!("invalid config: {}", e.message())))?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        match &overrides.out {
            Some(out) => config.out = out.clone(),
            None => config.out = dir.join(&config.out),
        }
        if let Some(t) = overrides.threads {
            config.threads = t;
        }
        if let Some(s) = overrides.seed {
            config.seed = Some(s);
        }
        let loaded = Self {
            config,
            dir,
            digest: crate::report::sha256_hex(&bytes),
            seed_override: overrides.seed,
        };
        loaded.validate()?;
        Ok(loaded)
    }

    /// Input paths are relative to the config file.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        self.dir.join(path)
    }

    /// `--seed`, then the section's own seed, then the top-level seed.
    fn seed(&self, section: Option<u64>, what: &str) -> CliResult<u64> {
        self.seed_override
            .or(section)
            .or(self.config.seed)
            .ok_or_else(|| CliError::config(format!("{what} is stochastic and needs a seed (set `seed` or pass --seed)")))
    }

    pub fn bootstrap_seed(&self) -> CliResult<u64> {
        let b = self.config.bootstrap.as_ref().ok_or_else(|| CliError::config("no [bootstrap] section"))?;
        self.seed(b.seed, "[bootstrap]")
    }

    pub fn simulation_seed(&self) -> CliResult<u64> {
        let s = self.config.simulation.as_ref().ok_or_else(|| CliError::config("no [simulation] section"))?;
        self.seed(s.seed, "[simulation]")
    }

    pub fn placebo_specs(&self) -> Vec<SpecName> {
        self.config
            .placebo
            .as_ref()
            .and_then(|p| p.specs.clone())
            .unwrap_or_else(|| self.config.estimate.specs.clone())
    }

    pub fn subgroup_specs(&self, s: &SubgroupSection) -> Vec<SpecName> {
        s.specs.clone().unwrap_or_else(|| self.config.estimate.specs.clone())
    }

    fn validate(&self) -> CliResult<()> {
        let c = &self.config;
        let nonempty = |specs: &[SpecName], what: &str| {
            if specs.is_empty() {
                Err(CliError::config(format!("{what} lists no estimator specs")))
            } else {
                Ok(())
            }
        };
        nonempty(&c.estimate.specs, "[estimate]")?;
        nonempty(&c.figures.specs, "[figures]")?;
        if let Some(b) = &c.bootstrap {
            nonempty(&b.specs, "[bootstrap]")?;
            if b.replicates < 2 {
                return Err(CliError::config("[bootstrap] replicates must be at least 2"));
            }
            self.bootstrap_seed()?;
        }
        if let Some(p) = &c.placebo {
            nonempty(&self.placebo_specs(), "[placebo]")?;
            if p.drop_last == 0 {
                return Err(CliError::config("[placebo] drop_last must be at least 1"));
            }
        }
        let mut names = BTreeSet::new();
        for s in &c.subgroup {
            if s.name.is_empty() || !s.name.chars().all(|ch| ch.is_ascii_alphanumeric() || ch == '_' || ch == '-') {
                return Err(CliError::config(format!(
                    "subgroup name {:?} must be nonempty and use only letters, digits, '_' or '-'",
                    s.name
                )));
            }
            if !names.insert(&s.name) {
                return Err(CliError::config(format!("duplicate subgroup name {:?}", s.name)));
            }
            nonempty(&self.subgroup_specs(s), &format!("[[subgroup]] {}", s.name))?;
        }
        if let Some(s) = &c.selection {
            if s.terms.is_empty() {
                return Err(CliError::config("[selection] needs at least one term"));
            }
            if let Some(b) = &s.binned {
                if b.bins == 0 {
                    return Err(CliError::config("[selection.binned] bins must be at least 1"));
                }
            }
        }
        if let Some(s) = &c.simulation {
            if s.draws == 0 {
                return Err(CliError::config("[simulation] draws must be at least 1"));
            }
            self.simulation_seed()?;
            let explicit = s.tau_turnout.is_some() || s.tau_dvs.is_some();
            match (explicit, s.tau_spec) {
                (true, Some(_)) => {
                    return Err(CliError::config("[simulation] give either tau_turnout/tau_dvs or tau_spec, not both"))
                }
                (true, None) if s.tau_turnout.is_none() || s.tau_dvs.is_none() => {
                    return Err(CliError::config("[simulation] needs both tau_turnout and tau_dvs"))
                }
                (false, None) => {
                    return Err(CliError::config("[simulation] needs tau_turnout and tau_dvs, or tau_spec"))
                }
                (false, Some(_)) => {
                    if s.turnout_panel.is_none() {
                        return Err(CliError::config("[simulation] tau_spec needs a turnout_panel"));
                    }
                    if s.dvs_panel.is_none() && c.panel.is_none() {
                        return Err(CliError::config("[simulation] tau_spec needs a dvs_panel or a [panel]"));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}
