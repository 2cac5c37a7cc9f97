//! Output tables, their text rendering, and provenance sidecars.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use sdid_core::estimators::EstimateResult;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(usize),
    Text(String),
    Empty,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(v) => v.to_string(),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn text(&self) -> String {
        match self {
            Cell::Num(v) => format!("{v:.4}"),
            other => other.csv(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// A CSV table; footer rows are separated by a rule in the text rendering.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub footer: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            ..Self::default()
        }
    }

    pub fn row(&mut self, cells: Vec<Cell>) {
        debug_assert_eq!(cells.len(), self.columns.len());
        self.rows.push(cells);
    }

    pub fn footer(&mut self, cells: Vec<Cell>) {
        debug_assert_eq!(cells.len(), self.columns.len());
        self.footer.push(cells);
    }

    pub fn to_csv(&self) -> CliResult<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let fail = |e: csv::Error| CliError::output(format!("cannot format CSV: {e}"));
        w.write_record(&self.columns).map_err(fail)?;
        for r in self.rows.iter().chain(&self.footer) {
            w.write_record(r.iter().map(Cell::csv)).map_err(fail)?;
        }
        w.into_inner().map_err(|e| CliError::output(format!("cannot format CSV: {e}")))
    }

    /// Fixed-width rendering for human review.
    pub fn to_text(&self) -> String {
        let render = |rows: &[Vec<Cell>]| -> Vec<Vec<String>> { rows.iter().map(|r| r.iter().map(Cell::text).collect()).collect() };
        let body = render(&self.rows);
        let foot = render(&self.footer);
        let mut width: Vec<usize> = self.columns.iter().map(|c| c.chars().count()).collect();
        for r in body.iter().chain(&foot) {
            for (w, c) in width.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |cells: &[String]| -> String {
            let parts: Vec<String> = cells
                .iter()
                .zip(&width)
                .enumerate()
                .map(|(k, (c, &w))| if k == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            parts.join("  ").trim_end().to_string()
        };
        let total = width.iter().sum::<usize>() + 2 * width.len().saturating_sub(1);
        let mut out = String::new();
        out.push_str(&line(&self.columns));
        out.push('\n');
        out.push_str(&"-".repeat(total));
        out.push('\n');
        for r in &body {
            out.push_str(&line(r));
            out.push('\n');
        }
        if !foot.is_empty() {
            out.push_str(&"-".repeat(total));
            out.push('\n');
            for r in &foot {
                out.push_str(&line(r));
                out.push('\n');
            }
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

/// Solver facts behind one estimate.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateRecord {
    pub label: String,
    pub spec: String,
    pub tau: f64,
    pub converged: bool,
    pub fixed_effects: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zeta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_hat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unit_weights: Option<SolverRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_weights: Option<SolverRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regularized_sc: Option<SolverRecord>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverRecord {
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ridge: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intercept: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l2: Option<f64>,
}

impl EstimateRecord {
    pub fn new(label: impl Into<String>, r: &EstimateResult) -> Self {
        let fe = serde_json::to_value(r.diagnostics.fixed_effects)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        Self {
            label: label.into(),
            spec: r.spec.label(),
            tau: r.tau,
            converged: r.diagnostics.converged,
            fixed_effects: fe,
            zeta: r.zeta.map(|z| z.zeta),
            sigma_hat: r.zeta.map(|z| z.sigma_hat),
            unit_weights: r.unit_solution.as_ref().map(|u| SolverRecord {
                converged: u.converged,
                iterations: u.iterations,
                objective: u.objective,
                ridge: None,
                intercept: Some(u.omega0),
                l1: None,
                l2: None,
            }),
            time_weights: r.time_solution.as_ref().map(|t| SolverRecord {
                converged: t.converged,
                iterations: t.iterations,
                objective: t.objective,
                ridge: Some(t.ridge),
                intercept: Some(t.lambda0),
                l1: None,
                l2: None,
            }),
            regularized_sc: r.sc_solution.as_ref().map(|s| SolverRecord {
                converged: true,
                iterations: s.sweeps,
                objective: s.objective,
                ridge: None,
                intercept: Some(s.intercept),
                l1: Some(s.l1),
                l2: Some(s.l2),
            }),
        }
    }
}

/// JSON sidecar written next to every numeric output.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub output: String,
    pub output_sha256: String,
    pub config_sha256: String,
    pub inputs: Vec<InputDigest>,
    pub seeds: BTreeMap<String, u64>,
    pub estimates: Vec<EstimateRecord>,
    pub decisions: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "serde_json::Value::is_null")]
    pub details: serde_json::Value,
}

impl Provenance {
    pub fn new(command: &str, config_sha256: &str) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            output: String::new(),
            output_sha256: String::new(),
            config_sha256: config_sha256.to_string(),
            inputs: Vec::new(),
            seeds: BTreeMap::new(),
            estimates: Vec::new(),
            decisions: BTreeMap::new(),
            details: serde_json::Value::Null,
        }
    }

    pub fn decide(&mut self, key: &str, value: impl Into<String>) {
        self.decisions.insert(key.to_string(), value.into());
    }
}

/// Writes `bytes` to a temporary file in the target directory, then renames
/// it into place so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let fail = |e: std::io::Error| CliError::output(format!("cannot write {}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(fail)?;
    tmp.write_all(bytes).map_err(fail)?;
    tmp.as_file().sync_all().map_err(fail)?;
    tmp.persist(path).map_err(|e| fail(e.error))?;
    Ok(())
}

/// Writes `<name>.csv`, `<name>.txt` and the `<name>.json` sidecar.
pub fn emit(out: &Path, name: &str, table: &Table, mut prov: Provenance) -> CliResult<PathBuf> {
    std::fs::create_dir_all(out).map_err(|e| CliError::output(format!("cannot create {}: {e}", out.display())))?;
    let csv = table.to_csv()?;
    let csv_path = out.join(format!("{name}.csv"));
    prov.output = format!("{name}.csv");
    prov.output_sha256 = sha256_hex(&csv);
    let mut json = serde_json::to_vec_pretty(&prov).map_err(|e| CliError::output(format!("cannot encode provenance: {e}")))?;
    json.push(b'\n');
    write_atomic(&csv_path, &csv)?;
    write_atomic(&out.join(format!("{name}.txt")), table.to_text().as_bytes())?;
    write_atomic(&out.join(format!("{name}.json")), &json)?;
    Ok(csv_path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_rendering_aligns_columns() {
        let mut t = Table::new(["statistic", "a", "bb"]);
        t.row(vec!["tau".into(), 1.23456.into(), Cell::Empty]);
        t.footer(vec!["n".into(), 10usize.into(), 3usize.into()]);
        let text = t.to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "statistic       a  bb");
        assert_eq!(lines[2], "tau        1.2346");
        assert_eq!(lines[4], "n              10   3");
    }

    #[test]
    fn csv_keeps_full_precision() {
        let mut t = Table::new(["x"]);
        t.row(vec![0.1f64.into()]);
        t.row(vec![(1.0f64 / 3.0).into()]);
        let s = String::from_utf8(t.to_csv().unwrap()).unwrap();
        assert_eq!(s, "x\n0.1\n0.3333333333333333\n");
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
