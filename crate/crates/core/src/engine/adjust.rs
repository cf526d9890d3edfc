use nalgebra::{DMatrix, DVector};

use super::cumulants::{CombinedCumulants, CumulantSet};
use crate::error::{Error, Result};
use crate::linalg::SpdFactor;

/// Everything derived from one evaluation of the cumulants.
///
/// `f2[(s, r)]` holds `F_{2s,r}`; `median_adj = info · m1` and
/// `mean_adj = f1 / 2`.
#[derive(Debug, Clone)]
pub struct AdjustmentBundle {
    pub f1: DVector<f64>,
    pub f2: DMatrix<f64>,
    pub f2_tilde: DVector<f64>,
    pub mean_adj: DVector<f64>,
    pub median_adj: DVector<f64>,
    pub m1: DVector<f64>,
    pub condition: f64,
}

pub fn compute_adjustments(c: &CumulantSet) -> Result<AdjustmentBundle> {
    c.validate()?;
    compute_adjustments_combined(&c.combined())
}

/// Matrix-form mean and median adjustments from `P+Q` and `P/3+Q/2`.
pub fn compute_adjustments_combined(c: &CombinedCumulants) -> Result<AdjustmentBundle> {
    let d = c.info.nrows();
    if c.sum.len() != d || c.weighted.len() != d {
        return Err(Error::argument(
            "combined cumulants must hold d matrices each",
        ));
    }
    let factor = SpdFactor::new(&c.info)?;
    let inv = factor.inverse();

    // F1_s = tr[i⁻¹ (P_s + Q_s)]
    let f1 = DVector::from_iterator(
        d,
        c.sum
            .iter()
            .map(|m| inv.component_mul(&m.transpose()).sum()),
    );

    // F2_{s,r} = [i⁻¹]_rᵀ (P_s/3 + Q_s/2) [i⁻¹]_r / i^{rr}
    let mut f2 = DMatrix::zeros(d, d);
    for r in 0..d {
        let col = inv.column(r);
        let irr = inv[(r, r)];
        for (s, w) in c.weighted.iter().enumerate() {
            f2[(s, r)] = (col.transpose() * w * col)[(0, 0)] / irr;
        }
    }

    let half_f1 = &f1 / 2.0;
    let mut m1 = DVector::zeros(d);
    let mut f2_tilde = DVector::zeros(d);
    for r in 0..d {
        let col = inv.column(r);
        let f2r = f2.column(r);
        f2_tilde[r] = col.dot(&f2r);
        m1[r] = col.dot(&(&half_f1 - f2r));
    }
    let median_adj = &c.info * &m1;

    Ok(AdjustmentBundle {
        f1,
        f2,
        f2_tilde,
        mean_adj: half_f1,
        median_adj,
        m1,
        condition: factor.condition(),
    })
}

impl AdjustmentBundle {
    /// `A* − i·F̃2`, which must reproduce `median_adj`.
    pub fn median_from_mean(&self, info: &DMatrix<f64>) -> DVector<f64> {
        &self.mean_adj - info * &self.f2_tilde
    }
}
