//! JSON number formatting with 17 significant digits.

use nalgebra::DMatrix;
use serde::ser::{SerializeSeq, Serializer};
use serde_json::value::RawValue;

/// `x` with 17 significant digits, or `null` when not finite.
pub fn format_sig17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "null".to_string()
    }
}

fn raw(x: f64) -> Box<RawValue> {
    RawValue::from_string(format_sig17(x)).expect("formatted number is valid JSON")
}

pub fn sig17<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_some(&raw(*x))
}

pub fn sig17_opt<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match x {
        Some(v) => s.serialize_some(&raw(*v)),
        None => s.serialize_none(),
    }
}

pub fn sig17_vec<S: Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(xs.len()))?;
    for &x in xs {
        seq.serialize_element(&raw(x))?;
    }
    seq.end()
}

pub fn sig17_pairs<S: Serializer>(xs: &[(f64, f64)], s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(xs.len()))?;
    for &(a, b) in xs {
        seq.serialize_element(&[raw(a), raw(b)])?;
    }
    seq.end()
}

/// Row-major nested arrays.
pub fn sig17_matrix<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(m.nrows()))?;
    for i in 0..m.nrows() {
        let row: Vec<Box<RawValue>> = (0..m.ncols()).map(|j| raw(m[(i, j)])).collect();
        seq.serialize_element(&row)?;
    }
    seq.end()
}

/// Nested rows, as produced by [`matrix_rows`].
pub fn sig17_rows<S: Serializer>(rows: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(rows.len()))?;
    for row in rows {
        let row: Vec<Box<RawValue>> = row.iter().map(|&x| raw(x)).collect();
        seq.serialize_element(&row)?;
    }
    seq.end()
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}
