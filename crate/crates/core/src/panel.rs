//! Balanced unit × period panels with a single block of treated cells.
//!
//! The canonical input is a long-format CSV with one row per (unit, period).
//! Units are ordered lexicographically and periods numerically after loading,
//! so the row order of the source never affects the result.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A per-unit metadata value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MetaValue {
    Num(f64),
    Text(String),
}

impl MetaValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            MetaValue::Num(v) => Some(*v),
            MetaValue::Text(s) => s.trim().parse().ok(),
        }
    }

    fn matches(&self, other: &MetaValue) -> bool {
        match (self, other) {
            (MetaValue::Num(a), MetaValue::Num(b)) => a == b,
            (MetaValue::Text(a), MetaValue::Text(b)) => a == b,
            (MetaValue::Num(a), MetaValue::Text(b)) | (MetaValue::Text(b), MetaValue::Num(a)) => {
                b.trim().parse::<f64>().map(|b| b == *a).unwrap_or(false)
            }
        }
    }
}

impl std::fmt::Display for MetaValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MetaValue::Num(v) => write!(f, "{v}"),
            MetaValue::Text(s) => f.write_str(s),
        }
    }
}

pub type UnitMeta = BTreeMap<String, MetaValue>;

/// Balanced outcome panel, `N` units by `T` periods, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    units: Vec<String>,
    periods: Vec<i64>,
    outcome: Vec<f64>,
    meta: Vec<UnitMeta>,
    meta_keys: BTreeSet<String>,
}

impl PanelDataset {
    /// Builds a panel from one outcome row per unit.
    pub fn new(units: Vec<String>, periods: Vec<i64>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let meta = vec![UnitMeta::new(); units.len()];
        Self::with_meta(units, periods, rows, meta)
    }

    pub fn with_meta(
        units: Vec<String>,
        periods: Vec<i64>,
        rows: Vec<Vec<f64>>,
        meta: Vec<UnitMeta>,
    ) -> Result<Self> {
        if units.len() != rows.len() || units.len() != meta.len() {
            return Err(Error::DataError(format!(
                "{} units but {} outcome rows and {} metadata rows",
                units.len(),
                rows.len(),
                meta.len()
            )));
        }
        if periods.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::DataError("periods must be strictly increasing".into()));
        }
        let mut seen = BTreeSet::new();
        for u in &units {
            if !seen.insert(u.as_str()) {
                return Err(Error::DataError(format!("unit {u:?} appears twice")));
            }
        }
        let t = periods.len();
        let mut outcome = Vec::with_capacity(units.len() * t);
        for (unit, row) in units.iter().zip(&rows) {
            if row.len() != t {
                return Err(Error::UnbalancedPanel {
                    unit: unit.clone(),
                    period: periods.get(row.len()).copied().unwrap_or_default(),
                });
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err(Error::DataError(format!("non-finite outcome {v} for unit {unit:?}")));
            }
            outcome.extend_from_slice(row);
        }
        let meta_keys = meta.iter().flat_map(|m| m.keys().cloned()).collect();
        Ok(Self {
            units,
            periods,
            outcome,
            meta,
            meta_keys,
        })
    }

    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn n_periods(&self) -> usize {
        self.periods.len()
    }

    pub fn units(&self) -> &[String] {
        &self.units
    }

    pub fn periods(&self) -> &[i64] {
        &self.periods
    }

    #[inline]
    pub fn y(&self, unit: usize, period: usize) -> f64 {
        self.outcome[unit * self.periods.len() + period]
    }

    pub fn row(&self, unit: usize) -> &[f64] {
        let t = self.periods.len();
        &self.outcome[unit * t..(unit + 1) * t]
    }

    pub fn meta(&self, unit: usize) -> &UnitMeta {
        &self.meta[unit]
    }

    /// Attribute names declared by at least one unit.
    pub fn meta_keys(&self) -> &BTreeSet<String> {
        &self.meta_keys
    }

    pub fn has_meta_key(&self, key: &str) -> bool {
        self.meta_keys.contains(key)
    }

    /// Panel restricted to the given unit indices, in the given order.
    /// Repeated indices get a `#k` suffix so unit ids stay unique.
    pub fn select_units(&self, indices: &[usize]) -> PanelDataset {
        let t = self.periods.len();
        let mut counts: HashMap<usize, usize> = HashMap::new();
        let mut units = Vec::with_capacity(indices.len());
        let mut outcome = Vec::with_capacity(indices.len() * t);
        let mut meta = Vec::with_capacity(indices.len());
        for &i in indices {
            let k = counts.entry(i).or_insert(0);
            if *k == 0 {
                units.push(self.units[i].clone());
            } else {
                units.push(format!("{}#{}", self.units[i], k));
            }
            *k += 1;
            outcome.extend_from_slice(self.row(i));
            meta.push(self.meta[i].clone());
        }
        PanelDataset {
            units,
            periods: self.periods.clone(),
            outcome,
            meta,
            meta_keys: self.meta_keys.clone(),
        }
    }

    /// Keeps only the first `keep` periods.
    pub fn truncate_periods(&self, keep: usize) -> PanelDataset {
        let keep = keep.min(self.periods.len());
        let outcome = (0..self.n_units())
            .flat_map(|i| self.row(i)[..keep].iter().copied())
            .collect();
        PanelDataset {
            units: self.units.clone(),
            periods: self.periods[..keep].to_vec(),
            outcome,
            meta: self.meta.clone(),
            meta_keys: self.meta_keys.clone(),
        }
    }

    /// Applies `f` to every outcome value.
    pub fn map_outcomes(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> PanelDataset {
        let t = self.periods.len();
        let outcome = self
            .outcome
            .iter()
            .enumerate()
            .map(|(k, &v)| f(k / t, k % t, v))
            .collect();
        PanelDataset {
            outcome,
            ..self.clone()
        }
    }
}

/// Which units are treated and where the treated block starts.
///
/// Treated units receive treatment in exactly the last `t_post` periods.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreatmentDesign {
    treated: Vec<bool>,
    t_pre: usize,
    t_post: usize,
}

impl TreatmentDesign {
    pub fn new(treated: Vec<bool>, t_pre: usize, n_periods: usize) -> Result<Self> {
        let n_tr = treated.iter().filter(|&&t| t).count();
        if n_tr == 0 || n_tr == treated.len() {
            return Err(Error::DesignError(format!(
                "need at least one treated and one control unit, got {} treated of {}",
                n_tr,
                treated.len()
            )));
        }
        if t_pre < 2 {
            return Err(Error::DesignError(format!(
                "need at least 2 pre-treatment periods, got {t_pre}"
            )));
        }
        if t_pre >= n_periods {
            return Err(Error::DesignError(format!(
                "need at least 1 post-treatment period ({t_pre} pre of {n_periods})"
            )));
        }
        Ok(Self {
            treated,
            t_pre,
            t_post: n_periods - t_pre,
        })
    }

    pub fn is_treated(&self, unit: usize) -> bool {
        self.treated[unit]
    }

    pub fn treated_flags(&self) -> &[bool] {
        &self.treated
    }

    pub fn treated_units(&self) -> Vec<usize> {
        (0..self.treated.len()).filter(|&i| self.treated[i]).collect()
    }

    pub fn control_units(&self) -> Vec<usize> {
        (0..self.treated.len()).filter(|&i| !self.treated[i]).collect()
    }

    pub fn n_treated(&self) -> usize {
        self.treated.iter().filter(|&&t| t).count()
    }

    pub fn n_control(&self) -> usize {
        self.treated.len() - self.n_treated()
    }

    pub fn t_pre(&self) -> usize {
        self.t_pre
    }

    pub fn t_post(&self) -> usize {
        self.t_post
    }

    pub fn n_periods(&self) -> usize {
        self.t_pre + self.t_post
    }

    /// `W_it`: 1 iff unit `i` is treated and `t` lies in the post block.
    pub fn w(&self, unit: usize, period: usize) -> bool {
        self.treated[unit] && period >= self.t_pre
    }

    fn check_shape(&self, panel: &PanelDataset) -> Result<()> {
        if self.treated.len() != panel.n_units() || self.n_periods() != panel.n_periods() {
            return Err(Error::DesignError(format!(
                "design is {}x{} but panel is {}x{}",
                self.treated.len(),
                self.n_periods(),
                panel.n_units(),
                panel.n_periods()
            )));
        }
        Ok(())
    }
}

/// Checks that a design matches a panel's dimensions.
pub fn check_design(panel: &PanelDataset, design: &TreatmentDesign) -> Result<()> {
    design.check_shape(panel)
}

/// Column names for each role in a long-format panel file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanelSchema {
    pub unit: String,
    pub period: String,
    pub outcome: String,
    pub treated: String,
    #[serde(default)]
    pub state: Option<String>,
    #[serde(default)]
    pub vap: Option<String>,
    #[serde(default)]
    pub lag_dem_share: Option<String>,
    #[serde(default)]
    pub grant_per_vap: Option<String>,
    /// Extra per-unit columns carried as metadata under their own names.
    #[serde(default)]
    pub covariates: Vec<String>,
    /// Outcome is a percentage and must lie in [0, 100].
    #[serde(default)]
    pub percent_outcome: bool,
}

impl PanelSchema {
    pub fn new(unit: &str, period: &str, outcome: &str, treated: &str) -> Self {
        Self {
            unit: unit.into(),
            period: period.into(),
            outcome: outcome.into(),
            treated: treated.into(),
            state: None,
            vap: None,
            lag_dem_share: None,
            grant_per_vap: None,
            covariates: Vec::new(),
            percent_outcome: false,
        }
    }

    /// (metadata key, source column, numeric?) for every optional role.
    fn meta_columns(&self) -> Vec<(String, String, bool)> {
        let mut out = Vec::new();
        if let Some(c) = &self.state {
            out.push(("state".to_string(), c.clone(), false));
        }
        for (key, col) in [
            ("vap", &self.vap),
            ("lag_dem_share", &self.lag_dem_share),
            ("grant_per_vap", &self.grant_per_vap),
        ] {
            if let Some(c) = col {
                out.push((key.to_string(), c.clone(), true));
            }
        }
        for c in &self.covariates {
            out.push((c.clone(), c.clone(), false));
        }
        out
    }

    /// Every column the schema references.
    pub fn columns(&self) -> Vec<String> {
        let mut cols = vec![
            self.unit.clone(),
            self.period.clone(),
            self.outcome.clone(),
            self.treated.clone(),
        ];
        cols.extend(self.meta_columns().into_iter().map(|(_, c, _)| c));
        cols
    }
}

fn parse_flag(raw: &str) -> Option<bool> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "1" | "1.0" | "true" | "t" | "yes" => Some(true),
        "0" | "0.0" | "false" | "f" | "no" => Some(false),
        _ => None,
    }
}

struct UnitRows {
    cells: BTreeMap<i64, (f64, bool)>,
    meta: UnitMeta,
}

/// Reads a long-format panel and derives the block treatment design.
pub fn load_panel<R: Read>(source: R, schema: &PanelSchema) -> Result<(PanelDataset, TreatmentDesign)> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let unit_c = col(&schema.unit)?;
    let period_c = col(&schema.period)?;
    let outcome_c = col(&schema.outcome)?;
    let treated_c = col(&schema.treated)?;
    let meta_cols = schema
        .meta_columns()
        .into_iter()
        .map(|(key, name, numeric)| Ok((key, col(&name)?, name, numeric)))
        .collect::<Result<Vec<_>>>()?;

    let mut by_unit: BTreeMap<String, UnitRows> = BTreeMap::new();
    let mut all_periods = BTreeSet::new();
    for (k, record) in reader.records().enumerate() {
        let record = record?;
        let row = k + 2; // header is line 1
        let field = |c: usize| record.get(c).unwrap_or("");
        let unit = field(unit_c).to_string();
        if unit.is_empty() {
            return Err(Error::ParseError {
                row,
                column: schema.unit.clone(),
                message: "empty unit id".into(),
            });
        }
        let period: i64 = field(period_c).parse().map_err(|_| Error::ParseError {
            row,
            column: schema.period.clone(),
            message: format!("{:?} is not an integer period", field(period_c)),
        })?;
        let y: f64 = field(outcome_c)
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| Error::ParseError {
                row,
                column: schema.outcome.clone(),
                message: format!("{:?} is not a finite number", field(outcome_c)),
            })?;
        if schema.percent_outcome && !(0.0..=100.0).contains(&y) {
            return Err(Error::OutOfRange(format!(
                "outcome {y} for unit {unit:?}, period {period} is outside [0, 100]"
            )));
        }
        let flag = parse_flag(field(treated_c)).ok_or_else(|| Error::ParseError {
            row,
            column: schema.treated.clone(),
            message: format!("{:?} is not a treatment flag", field(treated_c)),
        })?;

        let entry = by_unit.entry(unit.clone()).or_insert_with(|| UnitRows {
            cells: BTreeMap::new(),
            meta: UnitMeta::new(),
        });
        if entry.cells.insert(period, (y, flag)).is_some() {
            return Err(Error::DuplicateCell { unit, period });
        }
        all_periods.insert(period);

        for (key, c, name, numeric) in &meta_cols {
            let raw = field(*c);
            if raw.is_empty() || raw.eq_ignore_ascii_case("na") {
                continue;
            }
            let value = match raw.parse::<f64>() {
                Ok(v) => MetaValue::Num(v),
                Err(_) if *numeric => {
                    return Err(Error::ParseError {
                        row,
                        column: name.clone(),
                        message: format!("{raw:?} is not numeric"),
                    })
                }
                Err(_) => MetaValue::Text(raw.to_string()),
            };
            match entry.meta.get(key) {
                Some(prev) if !prev.matches(&value) => {
                    return Err(Error::DataError(format!(
                        "attribute {key:?} varies within unit {unit:?} ({prev} vs {value})"
                    )))
                }
                Some(_) => {}
                None => {
                    entry.meta.insert(key.clone(), value);
                }
            }
        }
    }

    let periods: Vec<i64> = all_periods.into_iter().collect();
    let mut units = Vec::with_capacity(by_unit.len());
    let mut rows = Vec::with_capacity(by_unit.len());
    let mut flags = Vec::with_capacity(by_unit.len());
    let mut meta = Vec::with_capacity(by_unit.len());
    for (unit, data) in by_unit {
        if let Some(&p) = periods.iter().find(|p| !data.cells.contains_key(p)) {
            return Err(Error::UnbalancedPanel { unit, period: p });
        }
        rows.push(data.cells.values().map(|c| c.0).collect::<Vec<_>>());
        flags.push(data.cells.values().map(|c| c.1).collect::<Vec<_>>());
        units.push(unit);
        meta.push(data.meta);
    }

    let design = block_design(&units, &flags, periods.len())?;
    let panel = PanelDataset::with_meta(units, periods, rows, meta)?;
    Ok((panel, design))
}

pub fn load_panel_path(path: impl AsRef<Path>, schema: &PanelSchema) -> Result<(PanelDataset, TreatmentDesign)> {
    let file = std::fs::File::open(path)?;
    load_panel(std::io::BufReader::new(file), schema)
}

/// Derives the block design from per-cell treatment flags.
fn block_design(units: &[String], flags: &[Vec<bool>], n_periods: usize) -> Result<TreatmentDesign> {
    let treated: Vec<bool> = flags.iter().map(|f| f.iter().any(|&x| x)).collect();
    let adoption = flags
        .iter()
        .filter_map(|f| f.iter().position(|&x| x))
        .min()
        .unwrap_or(n_periods);
    for (unit, f) in units.iter().zip(flags) {
        if !f.iter().any(|&x| x) {
            continue;
        }
        if let Some(t) = (0..n_periods).find(|&t| f[t] != (t >= adoption)) {
            let reason = if f[t] {
                format!("flag set in pre-period index {t} before common adoption index {adoption}")
            } else {
                format!("flag cleared at period index {t} inside the post block starting at {adoption}")
            };
            return Err(Error::NonBlockTreatment {
                unit: unit.clone(),
                reason,
            });
        }
    }
    TreatmentDesign::new(treated, adoption, n_periods)
}

/// Writes the panel as long-format CSV, rows sorted by unit then period.
pub fn write_canonical<W: Write>(panel: &PanelDataset, design: &TreatmentDesign, out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let keys: Vec<&String> = panel.meta_keys().iter().collect();
    let mut header = vec!["unit", "period", "outcome", "treated"];
    header.extend(keys.iter().map(|k| k.as_str()));
    writer.write_record(&header)?;

    let mut order: Vec<usize> = (0..panel.n_units()).collect();
    order.sort_by(|&a, &b| panel.units()[a].cmp(&panel.units()[b]));
    for i in order {
        for t in 0..panel.n_periods() {
            let mut rec = vec![
                panel.units()[i].clone(),
                panel.periods()[t].to_string(),
                panel.y(i, t).to_string(),
                u8::from(design.w(i, t)).to_string(),
            ];
            rec.extend(keys.iter().map(|k| panel.meta(i).get(*k).map(|v| v.to_string()).unwrap_or_default()));
            writer.write_record(&rec)?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Literal value in a predicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Num(f64),
    Text(String),
}

impl Scalar {
    fn to_meta(&self) -> MetaValue {
        match self {
            Scalar::Num(v) => MetaValue::Num(*v),
            Scalar::Text(s) => MetaValue::Text(s.clone()),
        }
    }
}

/// Unit-selection predicate over metadata attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Predicate {
    All,
    Eq { attr: String, value: Scalar },
    In { attr: String, values: Vec<Scalar> },
    Lt { attr: String, value: f64 },
    Le { attr: String, value: f64 },
    Gt { attr: String, value: f64 },
    Ge { attr: String, value: f64 },
    And { args: Vec<Predicate> },
    Or { args: Vec<Predicate> },
    Not { arg: Box<Predicate> },
    /// Keeps treated units in tercile `index` (1 = lowest) of `attr` among
    /// treated units, plus every control unit. Ties at a cut point fall in
    /// the lower tercile.
    TreatedTercile { attr: String, index: u8 },
    /// Tercile `index` of `attr` over all units; treated and control units
    /// are both filtered.
    Tercile { attr: String, index: u8 },
}

impl Predicate {
    pub fn and(self, other: Predicate) -> Predicate {
        Predicate::And {
            args: vec![self, other],
        }
    }

    fn attrs<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Predicate::All => {}
            Predicate::Eq { attr, .. }
            | Predicate::In { attr, .. }
            | Predicate::Lt { attr, .. }
            | Predicate::Le { attr, .. }
            | Predicate::Gt { attr, .. }
            | Predicate::Ge { attr, .. }
            | Predicate::TreatedTercile { attr, .. }
            | Predicate::Tercile { attr, .. } => out.push(attr),
            Predicate::And { args } | Predicate::Or { args } => args.iter().for_each(|a| a.attrs(out)),
            Predicate::Not { arg } => arg.attrs(out),
        }
    }

    /// Resolves data-dependent parts (tercile cut points) against a panel.
    fn bind(&self, panel: &PanelDataset, design: &TreatmentDesign) -> Result<Bound> {
        Ok(match self {
            Predicate::And { args } => Bound::And(args.iter().map(|a| a.bind(panel, design)).collect::<Result<_>>()?),
            Predicate::Or { args } => Bound::Or(args.iter().map(|a| a.bind(panel, design)).collect::<Result<_>>()?),
            Predicate::Not { arg } => Bound::Not(Box::new(arg.bind(panel, design)?)),
            Predicate::TreatedTercile { attr, index } | Predicate::Tercile { attr, index } => {
                if !(1..=3).contains(index) {
                    return Err(Error::DesignError(format!("tercile index {index} not in 1..=3")));
                }
                let treated_only = matches!(self, Predicate::TreatedTercile { .. });
                let values: Vec<f64> = (0..panel.n_units())
                    .filter(|&i| !treated_only || design.is_treated(i))
                    .filter_map(|i| panel.meta(i).get(attr).and_then(MetaValue::as_f64))
                    .collect();
                let (lo, hi) = tercile_bounds(&values, *index);
                Bound::Range {
                    attr: attr.clone(),
                    lo,
                    hi,
                    treated_only,
                }
            }
            other => Bound::Leaf(other.clone()),
        })
    }
}

enum Bound {
    Leaf(Predicate),
    And(Vec<Bound>),
    Or(Vec<Bound>),
    Not(Box<Bound>),
    /// lo < x <= hi
    Range {
        attr: String,
        lo: f64,
        hi: f64,
        treated_only: bool,
    },
}

impl Bound {
    fn eval(&self, meta: &UnitMeta, treated: bool) -> bool {
        let num = |attr: &str| meta.get(attr).and_then(MetaValue::as_f64);
        match self {
            Bound::And(args) => args.iter().all(|a| a.eval(meta, treated)),
            Bound::Or(args) => args.iter().any(|a| a.eval(meta, treated)),
            Bound::Not(arg) => !arg.eval(meta, treated),
            Bound::Range {
                attr,
                lo,
                hi,
                treated_only,
            } => {
                if *treated_only && !treated {
                    return true;
                }
                num(attr).is_some_and(|x| x > *lo && x <= *hi)
            }
            Bound::Leaf(p) => match p {
                Predicate::All => true,
                Predicate::Eq { attr, value } => meta.get(attr).is_some_and(|v| v.matches(&value.to_meta())),
                Predicate::In { attr, values } => meta
                    .get(attr)
                    .is_some_and(|v| values.iter().any(|s| v.matches(&s.to_meta()))),
                Predicate::Lt { attr, value } => num(attr).is_some_and(|x| x < *value),
                Predicate::Le { attr, value } => num(attr).is_some_and(|x| x <= *value),
                Predicate::Gt { attr, value } => num(attr).is_some_and(|x| x > *value),
                Predicate::Ge { attr, value } => num(attr).is_some_and(|x| x >= *value),
                _ => unreachable!("composite predicates are bound separately"),
            },
        }
    }
}

/// Linear-interpolation sample quantile (the common "type 7" definition).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Half-open value interval `(lo, hi]` of tercile `index`.
fn tercile_bounds(values: &[f64], index: u8) -> (f64, f64) {
    if values.is_empty() {
        return (f64::INFINITY, f64::NEG_INFINITY);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile(&sorted, 1.0 / 3.0);
    let q2 = quantile(&sorted, 2.0 / 3.0);
    match index {
        1 => (f64::NEG_INFINITY, q1),
        2 => (q1, q2),
        _ => (q2, f64::INFINITY),
    }
}

/// Restricts the panel to units satisfying `predicate`.
pub fn subset(
    panel: &PanelDataset,
    design: &TreatmentDesign,
    predicate: &Predicate,
) -> Result<(PanelDataset, TreatmentDesign)> {
    check_design(panel, design)?;
    let mut attrs = Vec::new();
    predicate.attrs(&mut attrs);
    if let Some(a) = attrs.into_iter().find(|a| !panel.has_meta_key(a)) {
        return Err(Error::UnknownAttribute(a.to_string()));
    }
    let bound = predicate.bind(panel, design)?;
    let keep: Vec<usize> = (0..panel.n_units())
        .filter(|&i| bound.eval(panel.meta(i), design.is_treated(i)))
        .collect();
    let treated: Vec<bool> = keep.iter().map(|&i| design.is_treated(i)).collect();
    let n_tr = treated.iter().filter(|&&t| t).count();
    if n_tr == 0 || n_tr == treated.len() {
        return Err(Error::EmptyArmError {
            treated: n_tr,
            control: treated.len() - n_tr,
        });
    }
    let sub = panel.select_units(&keep);
    let sub_design = TreatmentDesign::new(treated, design.t_pre(), panel.n_periods())?;
    Ok((sub, sub_design))
}

/// Unweighted per-period means of the treated and control arms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupTrends {
    pub periods: Vec<i64>,
    pub treated: Vec<f64>,
    pub control: Vec<f64>,
}

pub fn group_trends(panel: &PanelDataset, design: &TreatmentDesign) -> Result<GroupTrends> {
    check_design(panel, design)?;
    let mean_over = |units: &[usize], t: usize| units.iter().map(|&i| panel.y(i, t)).sum::<f64>() / units.len() as f64;
    let tr = design.treated_units();
    let co = design.control_units();
    Ok(GroupTrends {
        periods: panel.periods().to_vec(),
        treated: (0..panel.n_periods()).map(|t| mean_over(&tr, t)).collect(),
        control: (0..panel.n_periods()).map(|t| mean_over(&co, t)).collect(),
    })
}
