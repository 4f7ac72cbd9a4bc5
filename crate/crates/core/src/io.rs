//! CSV and JSON interchange.
//!
//! Matrices are plain CSV, one row per line. A first row that contains a
//! non-numeric token (other than the missing marker) is treated as a header
//! and skipped. In response files an empty field or the literal `NA` marks an
//! unobserved cell; design files must be complete.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{PeerError, Result};
use crate::masked::ObservedMatrix;
use crate::peer::{rank_threshold, FitTimings, PeerConfig, PeerModel};
use crate::scalar::Scalar;
use crate::simgen::{GroundTruth, SimScenario};

pub const MISSING_TOKEN: &str = "NA";

/// Parsed numeric table; `None` cells were empty or `NA`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Option<Vec<String>>,
    pub rows: usize,
    pub cols: usize,
    /// Row-major.
    pub cells: Vec<Option<f64>>,
}

fn is_missing(field: &str) -> bool {
    field.is_empty() || field == MISSING_TOKEN
}

fn looks_like_header(record: &csv::StringRecord) -> bool {
    record
        .iter()
        .any(|f| !is_missing(f) && f.parse::<f64>().is_err())
}

pub fn parse_table<R: Read>(reader: R) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut header = None;
    let mut cells = Vec::new();
    let mut rows = 0;
    let mut cols = 0;
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        if line == 0 && looks_like_header(&record) {
            header = Some(record.iter().map(str::to_owned).collect());
            cols = record.len();
            continue;
        }
        if rows == 0 && header.is_none() {
            cols = record.len();
        }
        if record.len() != cols {
            return Err(PeerError::invalid(format!(
                "line {} has {} fields, expected {cols}",
                line + 1,
                record.len()
            )));
        }
        for field in record.iter() {
            if is_missing(field) {
                cells.push(None);
            } else {
                let v: f64 = field.parse().map_err(|_| {
                    PeerError::invalid(format!(
                        "line {}: cannot parse {field:?} as a number",
                        line + 1
                    ))
                })?;
                if !v.is_finite() {
                    return Err(PeerError::invalid(format!(
                        "line {}: non-finite value {field}",
                        line + 1
                    )));
                }
                cells.push(Some(v));
            }
        }
        rows += 1;
    }
    if rows == 0 || cols == 0 {
        return Err(PeerError::invalid("table has no data rows"));
    }
    Ok(Table {
        header,
        rows,
        cols,
        cells,
    })
}

impl Table {
    pub fn into_dense(self) -> Result<DMatrix<f64>> {
        if let Some(pos) = self.cells.iter().position(Option::is_none) {
            return Err(PeerError::invalid(format!(
                "missing value at row {}, column {} of a complete matrix",
                pos / self.cols,
                pos % self.cols
            )));
        }
        let cols = self.cols;
        let cells = self.cells;
        Ok(DMatrix::from_fn(self.rows, cols, |i, j| {
            cells[i * cols + j].unwrap()
        }))
    }

    pub fn into_observed(self) -> Result<ObservedMatrix<f64>> {
        ObservedMatrix::from_row_cells(self.rows, self.cols, &self.cells)
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| {
        PeerError::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

pub fn read_design_csv(path: &Path) -> Result<DMatrix<f64>> {
    parse_table(open(path)?)?.into_dense()
}

pub fn read_response_csv(path: &Path) -> Result<ObservedMatrix<f64>> {
    parse_table(open(path)?)?.into_observed()
}

fn fmt<T: Scalar>(v: T) -> String {
    format!("{}", v.as_f64())
}

pub fn write_matrix_csv<T: Scalar, W: Write>(writer: W, m: &DMatrix<T>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(writer);
    for i in 0..m.nrows() {
        w.write_record(m.row(i).iter().map(|&v| fmt(v)))?;
    }
    w.flush()?;
    Ok(())
}

/// Unobserved cells are written as `NA`.
pub fn write_observed_csv<T: Scalar, W: Write>(writer: W, obs: &ObservedMatrix<T>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(writer);
    for i in 0..obs.nrows() {
        w.write_record((0..obs.ncols()).map(|j| match obs.get(i, j) {
            Some(v) => fmt(v),
            None => MISSING_TOKEN.to_owned(),
        }))?;
    }
    w.flush()?;
    Ok(())
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| {
        PeerError::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<D: for<'de> Deserialize<'de>>(path: &Path) -> Result<D> {
    Ok(serde_json::from_reader(open(path)?)?)
}

fn to_vec<T: Scalar>(it: impl Iterator<Item = T>) -> Vec<f64> {
    it.map(Scalar::as_f64).collect()
}

fn to_rows<T: Scalar>(m: &DMatrix<T>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| to_vec(r.iter().copied())).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDocument {
    /// 1-based.
    pub index: usize,
    pub d_hat: f64,
    pub lambda: f64,
    /// `(predictor index, coefficient)` for the nonzero entries, 0-based.
    pub u_hat: Vec<(usize, f64)>,
    pub v_hat: Vec<f64>,
    pub retained: bool,
    pub lasso_converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitDocument {
    pub iterations_used: usize,
    pub converged: bool,
    pub final_relative_change: f64,
    pub singular_values: Vec<f64>,
    pub trailing_singular_value: f64,
}

/// Serialized fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub n_predictors: usize,
    pub n_responses: usize,
    pub initial_rank: usize,
    pub estimated_rank: usize,
    pub rank_threshold: f64,
    pub layers: Vec<LayerDocument>,
    pub intercept: Vec<f64>,
    pub init: InitDocument,
    pub config: PeerConfig,
    pub timings: FitTimings,
}

impl ModelDocument {
    pub fn from_model<T: Scalar>(model: &PeerModel<T>, n: usize) -> Self {
        let layers = model
            .layers
            .iter()
            .map(|l| LayerDocument {
                index: l.index,
                d_hat: l.d_hat.as_f64(),
                lambda: l.lambda.as_f64(),
                u_hat: l
                    .u_hat
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != T::zero())
                    .map(|(j, v)| (j, v.as_f64()))
                    .collect(),
                v_hat: to_vec(l.v_hat.iter().copied()),
                retained: l.index <= model.estimated_rank,
                lasso_converged: l.lasso_converged,
            })
            .collect();
        ModelDocument {
            n_predictors: model.n_predictors(),
            n_responses: model.n_responses(),
            initial_rank: model.config.rank,
            estimated_rank: model.estimated_rank,
            rank_threshold: rank_threshold(n),
            layers,
            intercept: to_vec(model.intercept.iter().copied()),
            init: InitDocument {
                iterations_used: model.init.iterations_used,
                converged: model.init.converged,
                final_relative_change: model.init.final_relative_change,
                singular_values: to_vec(model.init.singular_values().iter().copied()),
                trailing_singular_value: model.init.trailing_singular_value.as_f64(),
            },
            config: model.config,
            timings: model.timings,
        }
    }

    /// Rebuilds the p x q coefficient matrix from the retained layers.
    pub fn coefficients(&self) -> DMatrix<f64> {
        let mut c = DMatrix::zeros(self.n_predictors, self.n_responses);
        for layer in self.layers.iter().filter(|l| l.retained) {
            for &(j, u) in &layer.u_hat {
                for (k, v) in layer.v_hat.iter().enumerate() {
                    c[(j, k)] += layer.d_hat * u * v;
                }
            }
        }
        c
    }
}

/// Ground truth of a simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthDocument {
    pub scenario: SimScenario,
    pub sigma: f64,
    pub d_star: Vec<f64>,
    /// 0-based support of each left factor.
    pub supports: Vec<Vec<usize>>,
    /// Row-major, p x r*.
    pub u_star: Vec<Vec<f64>>,
    /// Row-major, q x r*.
    pub v_star: Vec<Vec<f64>>,
}

impl TruthDocument {
    pub fn new<T: Scalar>(scenario: &SimScenario, truth: &GroundTruth<T>, sigma: T) -> Self {
        TruthDocument {
            scenario: scenario.clone(),
            sigma: sigma.as_f64(),
            d_star: to_vec(truth.d_star.iter().copied()),
            supports: truth.supports.clone(),
            u_star: to_rows(&truth.u_star),
            v_star: to_rows(&truth.v_star),
        }
    }
}
