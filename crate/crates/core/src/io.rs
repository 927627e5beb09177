//! Text formats: model files, trajectories, matrices, result metadata,
//! eigenvalue tables, bound reports and experiment configurations.
//!
//! Every floating-point value is written with Rust's shortest round-trip
//! formatting, so writing and reading back reproduces the exact bits.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::analysis::BoundReport;
use crate::error::{Error, Result};
use crate::estimators::{EstimatorKind, SolverConfig};
use crate::model::{Generator, GridModel, Line};
use crate::sim::Trajectory;

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `contents`, creating parent directories as needed.
pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err)?;
    }
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_f64(field: &str, raw: &str, line: usize) -> Result<f64> {
    let value: f64 = raw
        .parse()
        .map_err(|_| Error::parse(Some(line), format!("{field}: '{raw}' is not a number")))?;
    if !value.is_finite() {
        return Err(Error::parse(
            Some(line),
            format!("{field}: non-finite value '{raw}'"),
        ));
    }
    Ok(value)
}

fn parse_index(field: &str, raw: &str, line: usize) -> Result<usize> {
    raw.parse().map_err(|_| {
        Error::parse(
            Some(line),
            format!("{field}: '{raw}' is not a nonnegative integer"),
        )
    })
}

fn row_error(line: usize, field: &str, message: impl std::fmt::Display) -> Error {
    Error::parse(Some(line), format!("invalid {field}: {message}"))
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize);
    Error::parse(line, e.to_string())
}

/// Reader over comma-separated text with trimmed fields and rows of any
/// width; width checks are left to the callers so they can report them.
fn csv_reader(text: &str, comments: bool) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(comments.then_some(b'#'))
        .from_reader(text.as_bytes())
}

/// Non-blank records with the 1-based line each starts on.
fn records<'a, 'b>(
    reader: &'a mut csv::Reader<&'b [u8]>,
) -> impl Iterator<Item = Result<(usize, csv::StringRecord)>> + use<'a, 'b> {
    reader
        .records()
        .map(|r| {
            let record = r.map_err(csv_error)?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            Ok((line, record))
        })
        .filter(|r| !matches!(r, Ok((_, rec)) if rec.iter().all(str::is_empty)))
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .flexible(true)
        .from_writer(Vec::new())
}

fn write_row<I, T>(w: &mut csv::Writer<Vec<u8>>, fields: I)
where
    I: IntoIterator<Item = T>,
    T: AsRef<[u8]>,
{
    w.write_record(fields).expect("writing to memory");
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("flushing to memory")).expect("fields are UTF-8")
}

// ---------------------------------------------------------------------------
// Model files

/// Parses the model format:
///
/// ```text
/// # comment
/// [nodes]
/// id,is_generator,M,D,sigma_P
/// 0,1,6.5,0.8,0.01
/// 1,0
/// [lines]
/// i,j,beta,gamma
/// 0,1,1.25
/// ```
///
/// Node ids are 0-based and must cover `0..n` exactly once. Load rows may
/// omit the generator columns. `gamma` is optional. Header rows are
/// optional; blank lines and lines starting with `#` are ignored.
pub fn parse_model(text: &str) -> Result<GridModel> {
    #[derive(PartialEq)]
    enum Section {
        None,
        Nodes,
        Lines,
    }
    let mut section = Section::None;
    let mut node_ids: BTreeMap<usize, usize> = BTreeMap::new();
    let mut generators = Vec::new();
    let mut lines: Vec<(usize, Line)> = Vec::new();
    let mut seen_lines: BTreeMap<(usize, usize), usize> = BTreeMap::new();

    let mut reader = csv_reader(text, true);
    for record in records(&mut reader) {
        let (lineno, record) = record?;
        let cols: Vec<&str> = record.iter().collect();
        if cols.len() == 1 && cols[0].starts_with('[') {
            section = match cols[0].to_ascii_lowercase().as_str() {
                "[nodes]" => Section::Nodes,
                "[lines]" => Section::Lines,
                _ => {
                    return Err(Error::parse(
                        Some(lineno),
                        format!("unknown section '{}'", cols[0]),
                    ))
                }
            };
            continue;
        }
        match section {
            Section::None => {
                return Err(Error::parse(
                    Some(lineno),
                    "data before any [nodes] or [lines] section",
                ));
            }
            Section::Nodes => {
                if cols[0] == "id" {
                    continue;
                }
                let id = parse_index("id", cols[0], lineno)?;
                let flag = cols.get(1).ok_or_else(|| {
                    Error::parse(Some(lineno), "node row needs at least id,is_generator")
                })?;
                let is_gen = match flag.to_ascii_lowercase().as_str() {
                    "1" | "true" => true,
                    "0" | "false" => false,
                    other => {
                        return Err(row_error(
                            lineno,
                            "is_generator",
                            format!("expected 0/1, got '{other}'"),
                        ))
                    }
                };
                if let Some(first) = node_ids.insert(id, lineno) {
                    return Err(row_error(
                        lineno,
                        "id",
                        format!("node {id} already defined at line {first}"),
                    ));
                }
                if is_gen {
                    if cols.len() != 5 {
                        return Err(Error::parse(
                            Some(lineno),
                            format!("generator row needs 5 columns (id,is_generator,M,D,sigma_P), got {}", cols.len()),
                        ));
                    }
                    let inertia = parse_f64("M", cols[2], lineno)?;
                    let damping = parse_f64("D", cols[3], lineno)?;
                    let sigma_p = parse_f64("sigma_P", cols[4], lineno)?;
                    if inertia <= 0.0 {
                        return Err(row_error(
                            lineno,
                            "M",
                            format!("inertia must be positive (got {inertia})"),
                        ));
                    }
                    if damping <= 0.0 {
                        return Err(row_error(
                            lineno,
                            "D",
                            format!("damping must be positive (got {damping})"),
                        ));
                    }
                    if sigma_p < 0.0 {
                        return Err(row_error(
                            lineno,
                            "sigma_P",
                            format!("sigma_P must be nonnegative (got {sigma_p})"),
                        ));
                    }
                    generators.push(Generator {
                        node: id,
                        inertia,
                        damping,
                        sigma_p,
                    });
                } else if cols.len() > 5 || cols[2..].iter().any(|c| !c.is_empty()) {
                    return Err(Error::parse(
                        Some(lineno),
                        "load rows take no generator parameters",
                    ));
                }
            }
            Section::Lines => {
                if cols[0] == "i" {
                    continue;
                }
                if !(3..=4).contains(&cols.len()) {
                    return Err(Error::parse(
                        Some(lineno),
                        format!(
                            "line row needs 3 or 4 columns (i,j,beta[,gamma]), got {}",
                            cols.len()
                        ),
                    ));
                }
                let from = parse_index("i", cols[0], lineno)?;
                let to = parse_index("j", cols[1], lineno)?;
                let beta = parse_f64("beta", cols[2], lineno)?;
                let gamma = match cols.get(3) {
                    Some(g) if !g.is_empty() => Some(parse_f64("gamma", g, lineno)?),
                    _ => None,
                };
                if from == to {
                    return Err(row_error(
                        lineno,
                        "lines",
                        format!("self-loop on node {from}"),
                    ));
                }
                let key = (from.min(to), from.max(to));
                if let Some(first) = seen_lines.insert(key, lineno) {
                    return Err(row_error(
                        lineno,
                        "lines",
                        format!(
                            "duplicate line ({}, {}), first defined at line {first}",
                            key.0, key.1
                        ),
                    ));
                }
                if beta <= 0.0 {
                    return Err(row_error(
                        lineno,
                        "beta",
                        format!("beta must be positive (got {beta})"),
                    ));
                }
                if let Some(g) = gamma.filter(|g| *g < 0.0) {
                    return Err(row_error(
                        lineno,
                        "gamma",
                        format!("gamma must be nonnegative (got {g})"),
                    ));
                }
                lines.push((
                    lineno,
                    Line {
                        from,
                        to,
                        beta,
                        gamma,
                    },
                ));
            }
        }
    }

    let n_nodes = node_ids.len();
    if let Some((&id, &lineno)) = node_ids.iter().find(|(&id, _)| id >= n_nodes) {
        return Err(row_error(
            lineno,
            "id",
            format!("node ids must be exactly 0..{n_nodes}; {id} is out of range"),
        ));
    }
    for (lineno, line) in &lines {
        if line.from >= n_nodes || line.to >= n_nodes {
            return Err(row_error(
                *lineno,
                "lines",
                format!(
                    "line ({}, {}) references a node outside 0..{n_nodes}",
                    line.from, line.to
                ),
            ));
        }
    }
    GridModel::new(
        n_nodes,
        generators,
        lines.into_iter().map(|(_, l)| l).collect(),
    )
}

pub fn format_model(model: &GridModel) -> String {
    let gens: BTreeMap<usize, &Generator> =
        model.generators().iter().map(|g| (g.node, g)).collect();
    let mut w = csv_writer();
    write_row(&mut w, ["[nodes]"]);
    write_row(&mut w, ["id", "is_generator", "M", "D", "sigma_P"]);
    for id in 0..model.n_nodes() {
        match gens.get(&id) {
            Some(g) => write_row(
                &mut w,
                [
                    id.to_string(),
                    "1".into(),
                    g.inertia.to_string(),
                    g.damping.to_string(),
                    g.sigma_p.to_string(),
                ],
            ),
            None => write_row(&mut w, [id.to_string(), "0".into()]),
        }
    }
    write_row(&mut w, ["[lines]"]);
    write_row(&mut w, ["i", "j", "beta", "gamma"]);
    for l in model.lines() {
        let mut row = vec![l.from.to_string(), l.to.to_string(), l.beta.to_string()];
        if let Some(g) = l.gamma {
            row.push(g.to_string());
        }
        write_row(&mut w, row);
    }
    finish(w)
}

pub fn load_model(path: &Path) -> Result<GridModel> {
    parse_model(&read_text(path)?).map_err(|e| e.with_path(path))
}

pub fn save_model(path: &Path, model: &GridModel) -> Result<()> {
    write_text(path, &format_model(model))
}

// ---------------------------------------------------------------------------
// Trajectories

fn trajectory_header(n: usize) -> Vec<String> {
    std::iter::once("t".to_string())
        .chain((1..=n).map(|i| format!("delta_{i}")))
        .chain((1..=n).map(|i| format!("omega_{i}")))
        .collect()
}

/// Header `t,delta_1..delta_N,omega_1..omega_N`, one row per sample with
/// `t = k·Δt`. The seed is not stored.
pub fn format_trajectory(traj: &Trajectory) -> String {
    let mut w = csv_writer();
    write_row(&mut w, trajectory_header(traj.n_gen()));
    let states = traj.states();
    let mut row = Vec::with_capacity(traj.dim() + 1);
    for k in 0..traj.len() {
        row.clear();
        row.push((k as f64 * traj.dt()).to_string());
        row.extend(states.column(k).iter().map(f64::to_string));
        write_row(&mut w, &row);
    }
    finish(w)
}

fn check_header(line: usize, header: &csv::StringRecord) -> Result<usize> {
    let cols: Vec<&str> = header.iter().collect();
    if cols.first() != Some(&"t") {
        return Err(Error::parse(Some(line), "header must start with 't'"));
    }
    let deltas = cols.iter().filter(|c| c.starts_with("delta_")).count();
    let omegas = cols.iter().filter(|c| c.starts_with("omega_")).count();
    if deltas == 0 {
        return Err(Error::parse(Some(line), "header has no delta_* columns"));
    }
    if omegas != deltas {
        return Err(Error::dimension(
            "omega_* columns vs delta_* columns",
            deltas,
            omegas,
        ));
    }
    let n = deltas;
    if cols != trajectory_header(n) {
        return Err(Error::parse(
            Some(line),
            format!("header must be t,delta_1..delta_{n},omega_1..omega_{n}"),
        ));
    }
    Ok(n)
}

pub fn parse_trajectory(text: &str) -> Result<Trajectory> {
    let mut reader = csv_reader(text, false);
    let mut rows = records(&mut reader);
    let (header_line, header) = rows
        .next()
        .ok_or_else(|| Error::parse(None, "empty trajectory file"))??;
    let n = check_header(header_line, &header)?;
    let width = 2 * n + 1;
    let mut times: Vec<(usize, f64)> = Vec::new();
    let mut values = Vec::new();
    for row in rows {
        let (lineno, record) = row?;
        if record.len() != width {
            return Err(Error::parse(
                Some(lineno),
                format!("ragged row: expected {width} columns, got {}", record.len()),
            ));
        }
        times.push((lineno, parse_f64("t", &record[0], lineno)?));
        for c in record.iter().skip(1) {
            values.push(parse_f64("state", c, lineno)?);
        }
    }
    if times.len() < 2 {
        return Err(Error::SampleDeficit {
            available: times.len(),
            required: 1,
            context: "a trajectory file needs two samples to define dt".into(),
        });
    }
    let dt = times[1].1 - times[0].1;
    if !(dt > 0.0) {
        return Err(Error::parse(
            Some(times[1].0),
            "t column must be strictly increasing",
        ));
    }
    for pair in times.windows(2) {
        let ((_, prev), (lineno, t)) = (pair[0], pair[1]);
        let step = t - prev;
        let slack = 1e-9 * dt + 4.0 * f64::EPSILON * t.abs();
        if (step - dt).abs() > slack {
            return Err(Error::parse(
                Some(lineno),
                format!("non-uniform time spacing: step {step} differs from dt = {dt}"),
            ));
        }
    }
    let states = DMatrix::from_column_slice(2 * n, times.len(), &values);
    Trajectory::new(n, dt, states, None)
}

pub fn load_trajectory(path: &Path) -> Result<Trajectory> {
    parse_trajectory(&read_text(path)?).map_err(|e| e.with_path(path))
}

pub fn save_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    write_text(path, &format_trajectory(traj))
}

// ---------------------------------------------------------------------------
// Matrices

/// One comma-separated row per matrix row, no header.
pub fn format_matrix(m: &DMatrix<f64>) -> String {
    let mut w = csv_writer();
    for row in m.row_iter() {
        write_row(&mut w, row.iter().map(f64::to_string));
    }
    finish(w)
}

pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let mut reader = csv_reader(text, false);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for row in records(&mut reader) {
        let (lineno, record) = row?;
        let values = record
            .iter()
            .map(|c| parse_f64("entry", c, lineno))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if values.len() != first.len() {
                return Err(Error::parse(
                    Some(lineno),
                    format!(
                        "ragged row: expected {} columns, got {}",
                        first.len(),
                        values.len()
                    ),
                ));
            }
        }
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(Error::parse(None, "empty matrix file"));
    }
    let ncols = rows[0].len();
    Ok(DMatrix::from_row_iterator(
        rows.len(),
        ncols,
        rows.into_iter().flatten(),
    ))
}

pub fn load_matrix(path: &Path) -> Result<DMatrix<f64>> {
    parse_matrix(&read_text(path)?).map_err(|e| e.with_path(path))
}

pub fn save_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    write_text(path, &format_matrix(m))
}

// ---------------------------------------------------------------------------
// TOML records

pub fn to_toml<T: Serialize>(value: &T) -> Result<String> {
    toml::to_string(value).map_err(|e| Error::Numerical(format!("cannot serialize record: {e}")))
}

fn from_toml<T: DeserializeOwned>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| text[..s.start].lines().count().max(1));
        Error::parse(line, e.message().to_string())
    })
}

pub fn load_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    from_toml(&read_text(path)?).map_err(|e| e.with_path(path))
}

pub fn save_toml<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &to_toml(value)?)
}

/// Sidecar written next to an estimated matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateMetadata {
    pub estimator: EstimatorKind,
    pub n_gen: usize,
    /// Sampling interval of the data the estimate was computed from.
    pub dt: f64,
    pub stride: usize,
    pub n_samples: usize,
    pub objective: f64,
    #[serde(default)]
    pub hyperparams: BTreeMap<String, f64>,
    #[serde(default)]
    pub thresholded: bool,
    pub relative_error: Option<f64>,
    pub b_hat: Option<Vec<f64>>,
    pub iterations: usize,
    pub optimality_residual: f64,
}

pub fn save_bound_report(path: &Path, report: &BoundReport) -> Result<()> {
    save_toml(path, report)
}

pub fn load_bound_report(path: &Path) -> Result<BoundReport> {
    load_toml(path)
}

// ---------------------------------------------------------------------------
// Eigenvalue tables

#[derive(Debug, Clone, PartialEq)]
pub struct EigenRow {
    pub value: Complex64,
    pub source: String,
}

/// `re,im,source` with a header row.
pub fn format_eigen_table(rows: &[EigenRow]) -> String {
    let mut w = csv_writer();
    write_row(&mut w, ["re", "im", "source"]);
    for r in rows {
        write_row(
            &mut w,
            [
                r.value.re.to_string(),
                r.value.im.to_string(),
                r.source.clone(),
            ],
        );
    }
    finish(w)
}

pub fn parse_eigen_table(text: &str) -> Result<Vec<EigenRow>> {
    let mut reader = csv_reader(text, false);
    let mut rows = records(&mut reader);
    match rows.next().transpose()? {
        Some((_, h)) if h.iter().eq(["re", "im", "source"]) => {}
        _ => return Err(Error::parse(Some(1), "header must be re,im,source")),
    }
    rows.map(|row| {
        let (lineno, record) = row?;
        if record.len() != 3 {
            return Err(Error::parse(Some(lineno), "expected re,im,source"));
        }
        Ok(EigenRow {
            value: Complex64::new(
                parse_f64("re", &record[0], lineno)?,
                parse_f64("im", &record[1], lineno)?,
            ),
            source: record[2].to_string(),
        })
    })
    .collect()
}

pub fn save_eigen_table(path: &Path, rows: &[EigenRow]) -> Result<()> {
    write_text(path, &format_eigen_table(rows))
}

pub fn load_eigen_table(path: &Path) -> Result<Vec<EigenRow>> {
    parse_eigen_table(&read_text(path)?).map_err(|e| e.with_path(path))
}

// ---------------------------------------------------------------------------
// Experiment configuration

pub const DEFAULT_DT_BASE: f64 = 1.0 / 60.0;

fn default_dt_base() -> f64 {
    DEFAULT_DT_BASE
}

fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationConfig {
    /// Simulation step in seconds.
    #[serde(default = "default_dt_base")]
    pub dt_base: f64,
    /// Observation window in seconds.
    pub t_obs: f64,
    /// Burn-in steps before recording; defaults to twice the slowest
    /// decaying time constant.
    #[serde(default)]
    pub burn_in: Option<usize>,
    pub seeds: Vec<u64>,
}

/// One estimator to run, with the hyperparameters it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    /// Matrix file with the previous estimate (Tikhonov).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<PathBuf>,
}

impl EstimatorSpec {
    pub fn plain(kind: EstimatorKind) -> Self {
        EstimatorSpec {
            kind,
            lambda: None,
            eta: None,
            nu: None,
            prior: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let need = |name: &str, v: Option<f64>| -> Result<()> {
            match v {
                Some(x) if x.is_finite() && x >= 0.0 => Ok(()),
                Some(x) => Err(Error::validation(
                    name,
                    format!("must be a nonnegative number, got {x}"),
                )),
                None => Err(Error::validation(
                    name,
                    format!("required by the {} estimator", self.kind),
                )),
            }
        };
        match self.kind {
            EstimatorKind::Uml | EstimatorKind::Cml => Ok(()),
            EstimatorKind::Lasso => need("lambda", self.lambda),
            EstimatorKind::SparseLowRank => {
                need("lambda", self.lambda)?;
                need("eta", self.eta)
            }
            EstimatorKind::Tikhonov => {
                need("nu", self.nu)?;
                if self.prior.is_none() {
                    return Err(Error::validation(
                        "prior",
                        "the TIKHONOV estimator needs a prior matrix file",
                    ));
                }
                Ok(())
            }
        }
    }
}

fn default_estimators() -> Vec<EstimatorSpec> {
    vec![
        EstimatorSpec::plain(EstimatorKind::Uml),
        EstimatorSpec::plain(EstimatorKind::Cml),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationConfig {
    /// Keep every `stride`-th sample (in units of `dt_base`).
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default = "default_estimators", rename = "estimator")]
    pub estimators: Vec<EstimatorSpec>,
    /// Zero the off-diagonal lower-right block of the estimate.
    #[serde(default)]
    pub threshold: bool,
    /// Also estimate the noise scale from the residuals.
    #[serde(default)]
    pub estimate_b: bool,
    #[serde(default)]
    pub solver: SolverConfig,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        EstimationConfig {
            stride: 1,
            estimators: default_estimators(),
            threshold: false,
            estimate_b: false,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    Stride,
    TObs,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::Stride => "stride",
            SweepVariable::TObs => "t_obs",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

/// Default stride grid (in base steps) for a Δt sweep.
pub const DEFAULT_STRIDE_GRID: [usize; 10] = [1, 2, 3, 4, 5, 6, 10, 15, 20, 30];

/// An experiment: which model, how to simulate, how to estimate.
///
/// Relative paths are resolved against the directory of the config file
/// by [`load_config`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model_path: PathBuf,
    pub outputs: PathBuf,
    pub generation: GenerationConfig,
    #[serde(default)]
    pub estimation: EstimationConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

/// Converts a window length to a whole number of samples of spacing `dt`,
/// accepting rounding error of `1e-9` relative.
pub fn samples_in(t_obs: f64, dt: f64) -> Result<usize> {
    let ratio = t_obs / dt;
    let rounded = ratio.round();
    if !(ratio.is_finite() && rounded >= 1.0) {
        return Err(Error::validation(
            "t_obs",
            format!("{t_obs} s holds no samples of {dt} s"),
        ));
    }
    if (ratio - rounded).abs() > 1e-9 * rounded {
        return Err(Error::validation(
            "t_obs",
            format!("{t_obs} s is not a whole number of {dt} s steps"),
        ));
    }
    Ok(rounded as usize)
}

impl ExperimentConfig {
    /// Checks everything that does not need the model.
    pub fn validate(&self) -> Result<()> {
        let g = &self.generation;
        if !(g.dt_base > 0.0 && g.dt_base.is_finite()) {
            return Err(Error::validation(
                "generation.dt_base",
                format!("must be positive, got {}", g.dt_base),
            ));
        }
        if !(g.t_obs > 0.0 && g.t_obs.is_finite()) {
            return Err(Error::validation(
                "generation.t_obs",
                format!("must be positive, got {}", g.t_obs),
            ));
        }
        samples_in(g.t_obs, g.dt_base)?;
        if g.seeds.is_empty() {
            return Err(Error::validation(
                "generation.seeds",
                "at least one seed is required",
            ));
        }
        let unique: BTreeSet<u64> = g.seeds.iter().copied().collect();
        if unique.len() != g.seeds.len() {
            return Err(Error::validation(
                "generation.seeds",
                "seeds must be distinct",
            ));
        }
        if self.estimation.stride == 0 {
            return Err(Error::validation("estimation.stride", "must be at least 1"));
        }
        if self.estimation.estimators.is_empty() {
            return Err(Error::validation(
                "estimation.estimator",
                "at least one estimator is required",
            ));
        }
        for spec in &self.estimation.estimators {
            spec.validate()?;
        }
        let s = &self.estimation.solver;
        if !(s.tolerance > 0.0) || s.max_iterations == 0 || !(s.condition_limit > 1.0) {
            return Err(Error::validation(
                "estimation.solver",
                "tolerance must be positive, max_iterations at least 1 and condition_limit above 1",
            ));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(Error::validation(
                    "sweep.values",
                    "at least one value is required",
                ));
            }
            for &v in &sweep.values {
                match sweep.variable {
                    SweepVariable::Stride if v < 1.0 || v.fract() != 0.0 => {
                        return Err(Error::validation(
                            "sweep.values",
                            format!("stride {v} is not a positive integer"),
                        ));
                    }
                    SweepVariable::TObs => {
                        if !(v > 0.0) {
                            return Err(Error::validation(
                                "sweep.values",
                                format!("t_obs {v} must be positive"),
                            ));
                        }
                        samples_in(v, g.dt_base)?;
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    /// Non-fatal problems that depend on the model size: windows that leave
    /// too few samples after striding for the likelihood estimators.
    pub fn sample_warnings(&self, n_gen: usize) -> Vec<String> {
        let needed = 2 * n_gen + 2;
        let mut cells: Vec<(f64, usize)> = vec![(self.generation.t_obs, self.estimation.stride)];
        if let Some(sweep) = &self.sweep {
            cells = sweep
                .values
                .iter()
                .map(|&v| match sweep.variable {
                    SweepVariable::Stride => (self.generation.t_obs, v as usize),
                    SweepVariable::TObs => (v, self.estimation.stride),
                })
                .collect();
        }
        cells
            .into_iter()
            .filter_map(|(t_obs, stride)| {
                let samples = samples_in(t_obs, self.generation.dt_base).ok()?;
                let kept = samples.div_ceil(stride);
                (kept <= needed).then(|| {
                    format!("t_obs = {t_obs} s at stride {stride} keeps {kept} samples; estimation needs more than {needed}")
                })
            })
            .collect()
    }

    fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut self.model_path);
        resolve(&mut self.outputs);
        for spec in &mut self.estimation.estimators {
            if let Some(p) = spec.prior.as_mut() {
                resolve(p);
            }
        }
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let config: ExperimentConfig = from_toml(text)?;
    config.validate()?;
    Ok(config)
}

/// Reads and validates a config, resolving relative paths against the
/// config file's directory.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let mut config = parse_config(&read_text(path)?).map_err(|e| e.with_path(path))?;
    let base = path.parent().unwrap_or(Path::new(""));
    config.resolve_paths(base);
    Ok(config)
}

pub fn save_config(path: &Path, config: &ExperimentConfig) -> Result<()> {
    save_toml(path, config)
}
