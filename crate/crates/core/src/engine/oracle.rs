//! Index-notation form of the median adjustment, evaluated by explicit
//! summation over all indices. Quartic in the dimension; meant for checking
//! the matrix form on small problems, not for fitting.

use nalgebra::DVector;

use super::cumulants::CumulantTensor;
use crate::error::{Error, Result};

pub const MAX_ORACLE_DIM: usize = 6;

/// Inverse by Gauss-Jordan elimination with partial pivoting.
fn gauss_jordan_inverse(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = a.len();
    let mut work: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| work[i][col].abs().total_cmp(&work[j][col].abs()))
            .unwrap();
        if work[pivot][col].abs() <= 1e-14 * scale {
            return Err(Error::numerical(
                "oracle: information matrix is singular",
                f64::INFINITY,
            ));
        }
        work.swap(col, pivot);
        let p = work[col][col];
        for v in work[col].iter_mut() {
            *v /= p;
        }
        for row in 0..n {
            if row != col {
                let f = work[row][col];
                if f != 0.0 {
                    for k in 0..2 * n {
                        work[row][k] -= f * work[col][k];
                    }
                }
            }
        }
    }
    Ok(work.into_iter().map(|r| r[n..].to_vec()).collect())
}

/// `M1_r = M_r / κ_{2r}` with `M_r = −κ_{1r} + κ_{3r} / (6 κ_{2r})`, using
///
/// * `κ_{1r} = −½ i^{rs} ν_r^{tu} (ν_{s,tu} + ν_{s,t,u}) / i^{rr}`,
///   `ν_r^{tu} = i^{tu} − i^{tr} i^{ru} / i^{rr}`
/// * `κ_{2r} = 1 / i^{rr}`
/// * `κ_{3r} = i^{rs} i^{rt} i^{ru} ν_{s,t,u} / (i^{rr})³`
pub fn index_notation_oracle(t: &CumulantTensor) -> Result<DVector<f64>> {
    let d = t.dim();
    if d > MAX_ORACLE_DIM {
        return Err(Error::argument(format!(
            "index-notation oracle limited to d <= {MAX_ORACLE_DIM}, got {d}"
        )));
    }
    let rows: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|j| t.info[(i, j)]).collect())
        .collect();
    let inv = gauss_jordan_inverse(&rows)?;

    let mut m1 = DVector::zeros(d);
    for r in 0..d {
        let irr = inv[r][r];
        if !(irr > 0.0) {
            return Err(Error::numerical(
                "oracle: information is not positive definite",
                f64::INFINITY,
            ));
        }
        let mut kappa1 = 0.0;
        for s in 0..d {
            for a in 0..d {
                for b in 0..d {
                    let nu_r = inv[a][b] - inv[a][r] * inv[r][b] / irr;
                    kappa1 += inv[r][s] * nu_r * (t.nu21(s, a, b) + t.nu3(s, a, b));
                }
            }
        }
        kappa1 *= -0.5 / irr;
        let kappa2 = 1.0 / irr;
        let mut kappa3 = 0.0;
        for s in 0..d {
            for a in 0..d {
                for b in 0..d {
                    kappa3 += inv[r][s] * inv[r][a] * inv[r][b] * t.nu3(s, a, b);
                }
            }
        }
        kappa3 /= irr * irr * irr;
        let m = -kappa1 + kappa3 / (6.0 * kappa2);
        m1[r] = m / kappa2;
    }
    Ok(m1)
}
