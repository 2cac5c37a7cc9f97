//! Least squares with absorbed fixed effects and HC1 standard errors, and
//! equal-count binned means.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

/// One column of a [`DataTable`]; `None` marks a missing value.
#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Numeric(Vec<Option<f64>>),
    Text(Vec<Option<String>>),
}

impl Column {
    fn is_missing(&self, row: usize) -> bool {
        match self {
            Column::Numeric(v) => v[row].is_none(),
            Column::Text(v) => v[row].is_none(),
        }
    }

    /// Group label used when the column is a fixed-effect dimension.
    fn label(&self, row: usize) -> Option<String> {
        match self {
            Column::Numeric(v) => v[row].map(|x| format!("{x:?}")),
            Column::Text(v) => v[row].clone(),
        }
    }
}

/// Column-oriented table. Columns whose non-missing cells all parse as
/// numbers are numeric; everything else is text.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DataTable {
    n_rows: usize,
    columns: BTreeMap<String, Column>,
}

fn is_missing_token(s: &str) -> bool {
    matches!(s, "" | "NA" | "na" | "NaN" | "nan" | ".")
}

impl DataTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.keys().map(String::as_str)
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.columns.get(name).ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    fn check_len(&mut self, len: usize) -> Result<()> {
        if self.columns.is_empty() {
            self.n_rows = len;
        } else if len != self.n_rows {
            return Err(Error::DataError(format!("column has {len} rows, table has {}", self.n_rows)));
        }
        Ok(())
    }

    pub fn add_numeric(&mut self, name: &str, values: Vec<Option<f64>>) -> Result<()> {
        self.check_len(values.len())?;
        if let Some(bad) = values.iter().flatten().find(|v| !v.is_finite()) {
            return Err(Error::DataError(format!("non-finite value {bad} in column {name:?}")));
        }
        self.columns.insert(name.to_string(), Column::Numeric(values));
        Ok(())
    }

    pub fn add_text(&mut self, name: &str, values: Vec<Option<String>>) -> Result<()> {
        self.check_len(values.len())?;
        self.columns.insert(name.to_string(), Column::Text(values));
        Ok(())
    }

    pub fn numeric(&self, name: &str) -> Result<&[Option<f64>]> {
        match self.column(name)? {
            Column::Numeric(v) => Ok(v),
            Column::Text(_) => Err(Error::DataError(format!("column {name:?} is not numeric"))),
        }
    }

    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let mut raw: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
        for rec in rdr.records() {
            let rec = rec?;
            for (k, cell) in rec.iter().enumerate() {
                raw[k].push(cell.to_string());
            }
        }
        let mut table = DataTable::new();
        for (name, cells) in headers.iter().zip(raw) {
            let parsed: Option<Vec<Option<f64>>> = cells
                .iter()
                .map(|c| {
                    if is_missing_token(c) {
                        Some(None)
                    } else {
                        c.parse::<f64>().ok().filter(|v| v.is_finite()).map(Some)
                    }
                })
                .collect();
            match parsed {
                Some(values) => table.add_numeric(name, values)?,
                None => table.add_text(
                    name,
                    cells.into_iter().map(|c| (!is_missing_token(&c)).then_some(c)).collect(),
                )?,
            }
        }
        Ok(table)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_csv(std::fs::File::open(path)?)
    }
}

/// A regressor: a single column or the elementwise product of several.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Term {
    pub factors: Vec<String>,
}

impl Term {
    pub fn column(name: &str) -> Self {
        Self {
            factors: vec![name.to_string()],
        }
    }

    pub fn interaction(names: &[&str]) -> Self {
        Self {
            factors: names.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Parses `"a"` or `"a:b"`.
    pub fn parse(spec: &str) -> Self {
        Self {
            factors: spec.split(':').map(|s| s.trim().to_string()).collect(),
        }
    }

    pub fn name(&self) -> String {
        self.factors.join(":")
    }
}

pub const INTERCEPT: &str = "intercept";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionResult {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub robust_se: Vec<f64>,
    /// HC1 covariance of the coefficients, row-major.
    pub covariance: Vec<f64>,
    pub n_obs: usize,
    /// Rows removed because a used column was missing.
    pub n_dropped: usize,
    pub fe_groups: Vec<String>,
    /// Parameters counted in the HC1 correction, absorbed levels included.
    pub n_params: usize,
    pub r_squared: f64,
    pub se_type: &'static str,
}

impl RegressionResult {
    fn index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    pub fn coef(&self, name: &str) -> Result<f64> {
        Ok(self.coefficients[self.index(name)?])
    }

    pub fn se(&self, name: &str) -> Result<f64> {
        Ok(self.robust_se[self.index(name)?])
    }
}

const RANK_TOL: f64 = 1e-9;
const DEMEAN_TOL: f64 = 1e-14;
const DEMEAN_MAX_ITER: usize = 10_000;

/// OLS of `outcome` on `terms` with the `fixed_effects` columns absorbed.
/// Without fixed effects an intercept is added.
pub fn fe_ols(data: &DataTable, outcome: &str, terms: &[Term], fixed_effects: &[String]) -> Result<RegressionResult> {
    let y_col = data.numeric(outcome)?;
    let mut used = vec![data.column(outcome)?];
    for term in terms {
        for f in &term.factors {
            data.numeric(f)?;
            used.push(data.column(f)?);
        }
    }
    for fe in fixed_effects {
        used.push(data.column(fe)?);
    }
    let rows: Vec<usize> = (0..data.n_rows()).filter(|&r| used.iter().all(|c| !c.is_missing(r))).collect();
    let n = rows.len();
    let n_dropped = data.n_rows() - n;

    let mut names = Vec::new();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    if fixed_effects.is_empty() {
        names.push(INTERCEPT.to_string());
        cols.push(vec![1.0; n]);
    }
    for term in terms {
        let factors: Vec<&[Option<f64>]> = term.factors.iter().map(|f| data.numeric(f)).collect::<Result<_>>()?;
        names.push(term.name());
        cols.push(rows.iter().map(|&r| factors.iter().map(|f| f[r].unwrap_or(f64::NAN)).product()).collect());
    }
    let mut y: Vec<f64> = rows.iter().map(|&r| y_col[r].unwrap_or(f64::NAN)).collect();
    let y_mean = y.iter().sum::<f64>() / n.max(1) as f64;
    let sst: f64 = y.iter().map(|v| (v - y_mean) * (v - y_mean)).sum();

    let groups: Vec<Vec<usize>> = fixed_effects
        .iter()
        .map(|fe| {
            let col = data.column(fe)?;
            let mut ids: HashMap<String, usize> = HashMap::new();
            Ok(rows
                .iter()
                .map(|&r| {
                    let next = ids.len();
                    *ids.entry(col.label(r).unwrap_or_default()).or_insert(next)
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let absorbed = absorbed_dof(&groups);
    let raw_norms: Vec<f64> = cols.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    if !groups.is_empty() {
        demean_groups(&mut y, &groups);
        for c in &mut cols {
            demean_groups(c, &groups);
        }
    }
    check_rank(&names, &cols, &raw_norms)?;

    let k = cols.len();
    let n_params = k + absorbed;
    if n <= n_params {
        return Err(Error::DataError(format!(
            "{n} usable rows cannot identify {n_params} parameters"
        )));
    }
    let x = DMatrix::from_fn(n, k, |i, j| cols[j][i]);
    let yv = DVector::from_vec(y);
    let qr = x.clone().qr();
    let r = qr.r();
    let qty = qr.q().transpose() * &yv;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::RankDeficient(names.last().cloned().unwrap_or_default()))?;
    let resid = &yv - &x * &beta;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| Error::RankDeficient(names.last().cloned().unwrap_or_default()))?;
    let bread = &r_inv * r_inv.transpose();
    let weighted = DMatrix::from_fn(n, k, |i, j| x[(i, j)] * resid[i] * resid[i]);
    let meat = x.transpose() * weighted;
    let correction = n as f64 / (n - n_params) as f64;
    let cov = (&bread * meat * &bread) * correction;
    let ssr = resid.norm_squared();

    Ok(RegressionResult {
        robust_se: (0..k).map(|j| cov[(j, j)].max(0.0).sqrt()).collect(),
        coefficients: beta.iter().copied().collect(),
        covariance: (0..k).flat_map(|i| (0..k).map(move |j| (i, j))).map(|(i, j)| cov[(i, j)]).collect(),
        names,
        n_obs: n,
        n_dropped,
        fe_groups: fixed_effects.to_vec(),
        n_params,
        r_squared: if sst > 0.0 { 1.0 - ssr / sst } else { 0.0 },
        se_type: "HC1",
    })
}

/// Sweeps out group means, alternating over dimensions until stable.
fn demean_groups(x: &mut [f64], groups: &[Vec<usize>]) {
    let scale = x.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    for _ in 0..DEMEAN_MAX_ITER {
        let mut change = 0.0f64;
        for g in groups {
            let n_groups = g.iter().copied().max().map_or(0, |m| m + 1);
            let mut sum = vec![0.0; n_groups];
            let mut count = vec![0usize; n_groups];
            for (v, &id) in x.iter().zip(g) {
                sum[id] += v;
                count[id] += 1;
            }
            for (v, &id) in x.iter_mut().zip(g) {
                let m = sum[id] / count[id] as f64;
                *v -= m;
                change = change.max(m.abs());
            }
        }
        if groups.len() == 1 || change <= DEMEAN_TOL * scale {
            return;
        }
    }
    log::warn!("fixed-effect demeaning stopped at the iteration cap");
}

/// Levels absorbed by the fixed effects. Two dimensions lose one level per
/// connected component of their bipartite graph; further dimensions are
/// counted as one redundant level each.
fn absorbed_dof(groups: &[Vec<usize>]) -> usize {
    let levels: Vec<usize> = groups.iter().map(|g| g.iter().copied().max().map_or(0, |m| m + 1)).collect();
    match groups.len() {
        0 => 0,
        1 => levels[0],
        _ => {
            let (a, b) = (&groups[0], &groups[1]);
            let mut parent: Vec<usize> = (0..levels[0] + levels[1]).collect();
            fn find(p: &mut [usize], mut i: usize) -> usize {
                while p[i] != i {
                    p[i] = p[p[i]];
                    i = p[i];
                }
                i
            }
            for (&u, &v) in a.iter().zip(b) {
                let (ru, rv) = (find(&mut parent, u), find(&mut parent, levels[0] + v));
                if ru != rv {
                    parent[ru] = rv;
                }
            }
            let components = (0..parent.len()).filter(|&i| find(&mut parent, i) == i).count();
            levels[0] + levels[1] - components + levels[2..].iter().map(|l| l - 1).sum::<usize>()
        }
    }
}

/// Modified Gram–Schmidt; a column whose orthogonal remainder is tiny
/// relative to its raw norm is collinear with earlier ones.
fn check_rank(names: &[String], cols: &[Vec<f64>], raw_norms: &[f64]) -> Result<()> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for (j, c) in cols.iter().enumerate() {
        let mut v = c.clone();
        for q in &basis {
            let p: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(q).for_each(|(x, qi)| *x -= p * qi);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if raw_norms[j] == 0.0 || norm <= RANK_TOL * raw_norms[j] {
            return Err(Error::RankDeficient(names[j].clone()));
        }
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bin {
    pub x_mean: f64,
    pub y_mean: f64,
    pub count: usize,
}

/// Equal-count bins by rank of `x`; the first `rows % n_bins` bins get one
/// extra row. Ties in `x` keep input order.
pub fn binned_scatter(x: &[f64], y: &[f64], n_bins: usize) -> Result<Vec<Bin>> {
    if x.len() != y.len() {
        return Err(Error::DataError(format!("x has {} rows, y has {}", x.len(), y.len())));
    }
    if n_bins == 0 {
        return Err(Error::Precondition("need at least one bin".into()));
    }
    if n_bins > x.len() {
        return Err(Error::BinError {
            bins: n_bins,
            rows: x.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::DataError("binned scatter needs finite values".into()));
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let base = x.len() / n_bins;
    let extra = x.len() % n_bins;
    let mut start = 0;
    Ok((0..n_bins)
        .map(|b| {
            let size = base + usize::from(b < extra);
            let idx = &order[start..start + size];
            start += size;
            Bin {
                x_mean: idx.iter().map(|&i| x[i]).sum::<f64>() / size as f64,
                y_mean: idx.iter().map(|&i| y[i]).sum::<f64>() / size as f64,
                count: size,
            }
        })
        .collect())
}
