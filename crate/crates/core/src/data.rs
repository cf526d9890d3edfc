//! CSV ingestion and design-matrix construction.
//!
//! Rows are numbered from 1 starting at the first data row (the header is
//! not counted).

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::betabin::BetaBinData;
use crate::betareg::BetaRegData;
use crate::error::{Error, Result};

pub const INTERCEPT: &str = "(Intercept)";

#[derive(Debug, Clone)]
pub struct Table {
    pub path: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path_ref = path.as_ref();
        let display = path_ref.display().to_string();
        let file = std::fs::File::open(path_ref).map_err(|source| Error::Io {
            path: display.clone(),
            source,
        })?;
        Self::from_reader(file, &display)
    }

    pub fn from_reader<R: std::io::Read>(reader: R, name: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .flexible(false)
            .from_reader(reader);
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| csv_error(name, e))?
            .iter()
            .map(str::to_string)
            .collect();
        if headers.is_empty() || headers.iter().all(String::is_empty) {
            return Err(Error::Data {
                path: name.to_string(),
                row: 0,
                column: String::new(),
                message: "file is empty (no header row)".into(),
            });
        }
        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| csv_error(name, e))?;
            rows.push(record.iter().map(str::to_string).collect());
        }
        if rows.is_empty() {
            return Err(Error::Data {
                path: name.to_string(),
                row: 0,
                column: String::new(),
                message: "file has no data rows".into(),
            });
        }
        Ok(Table {
            path: name.to_string(),
            headers,
            rows,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    fn index(&self, column: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == column)
            .ok_or_else(|| Error::Data {
                path: self.path.clone(),
                row: 0,
                column: column.to_string(),
                message: format!("no such column (available: {})", self.headers.join(", ")),
            })
    }

    fn data_error(&self, row: usize, column: &str, message: impl Into<String>) -> Error {
        Error::Data {
            path: self.path.clone(),
            row: row + 1,
            column: column.to_string(),
            message: message.into(),
        }
    }

    pub fn column_f64(&self, column: &str) -> Result<Vec<f64>> {
        let j = self.index(column)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let cell = &row[j];
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => {
                        Err(self.data_error(i, column, format!("'{cell}' is not a finite number")))
                    }
                }
            })
            .collect()
    }

    pub fn column_count(&self, column: &str) -> Result<Vec<u64>> {
        let j = self.index(column)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let cell = &row[j];
                let v = cell
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite() && *v >= 0.0 && v.fract() == 0.0);
                v.map(|v| v as u64).ok_or_else(|| {
                    self.data_error(i, column, format!("'{cell}' is not a non-negative integer"))
                })
            })
            .collect()
    }

    /// Keeps the rows for which `keep(row_index)` is true.
    pub fn filter_rows(&self, keep: impl Fn(usize) -> bool) -> Table {
        Table {
            path: self.path.clone(),
            headers: self.headers.clone(),
            rows: self
                .rows
                .iter()
                .enumerate()
                .filter(|(i, _)| keep(*i))
                .map(|(_, r)| r.clone())
                .collect(),
        }
    }

    /// Design matrix with an optional leading intercept column, and the
    /// column names.
    pub fn design(
        &self,
        columns: &[String],
        intercept: bool,
    ) -> Result<(DMatrix<f64>, Vec<String>)> {
        let n = self.n_rows();
        let mut names = Vec::new();
        let mut cols: Vec<Vec<f64>> = Vec::new();
        if intercept {
            names.push(INTERCEPT.to_string());
            cols.push(vec![1.0; n]);
        }
        for c in columns {
            cols.push(self.column_f64(c)?);
            names.push(c.clone());
        }
        if cols.is_empty() {
            return Err(Error::argument(
                "design has no columns (no intercept and no covariates)",
            ));
        }
        let x = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
        Ok((x, names))
    }
}

fn csv_error(name: &str, e: csv::Error) -> Error {
    let row = e
        .position()
        .map(|p| (p.record() as usize).max(1))
        .unwrap_or(0);
    Error::Data {
        path: name.to_string(),
        row,
        column: String::new(),
        message: e.to_string(),
    }
}

/// Which columns of a table define the response and the two designs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSpec {
    /// Response column (successes for beta-binomial data).
    pub response: String,
    /// Trials column, beta-binomial only.
    #[serde(default)]
    pub trials: Option<String>,
    #[serde(default)]
    pub mean_cols: Vec<String>,
    #[serde(default)]
    pub prec_cols: Vec<String>,
    #[serde(default = "yes")]
    pub mean_intercept: bool,
    #[serde(default = "yes")]
    pub prec_intercept: bool,
    /// Drop rows whose number of trials exceeds this value.
    #[serde(default)]
    pub max_trials: Option<u64>,
}

fn yes() -> bool {
    true
}

/// Parameter labels: mean block names followed by precision block names
/// prefixed with `prec:`.
pub fn component_names(mean: &[String], prec: &[String]) -> Vec<String> {
    mean.iter()
        .cloned()
        .chain(prec.iter().map(|n| format!("prec:{n}")))
        .collect()
}

pub fn load_betareg(table: &Table, spec: &ColumnSpec) -> Result<(BetaRegData, Vec<String>)> {
    let y = table.column_f64(&spec.response)?;
    for (i, &v) in y.iter().enumerate() {
        if !(v > 0.0 && v < 1.0) {
            return Err(table.data_error(
                i,
                &spec.response,
                format!("response {v} is not strictly inside (0, 1)"),
            ));
        }
    }
    let (x, xn) = table.design(&spec.mean_cols, spec.mean_intercept)?;
    let (z, zn) = table.design(&spec.prec_cols, spec.prec_intercept)?;
    let data = BetaRegData::new(DVector::from_vec(y), x, z)?;
    Ok((data, component_names(&xn, &zn)))
}

pub fn load_betabin(table: &Table, spec: &ColumnSpec) -> Result<(BetaBinData, Vec<String>)> {
    let trials_col = spec
        .trials
        .as_deref()
        .ok_or_else(|| Error::argument("beta-binomial data need a trials column"))?;
    let all_m = table.column_count(trials_col)?;
    let table = match spec.max_trials {
        Some(cap) => table.filter_rows(|i| all_m[i] <= cap),
        None => table.clone(),
    };
    let m = table.column_count(trials_col)?;
    let y = table.column_count(&spec.response)?;
    for i in 0..y.len() {
        if m[i] < 1 {
            return Err(table.data_error(i, trials_col, "number of trials must be at least 1"));
        }
        if y[i] > m[i] {
            return Err(table.data_error(
                i,
                &spec.response,
                format!("{} successes exceed {} trials", y[i], m[i]),
            ));
        }
    }
    let (x, xn) = table.design(&spec.mean_cols, spec.mean_intercept)?;
    let (z, zn) = table.design(&spec.prec_cols, spec.prec_intercept)?;
    let data = BetaBinData::new(y, m, x, z)?;
    Ok((data, component_names(&xn, &zn)))
}
