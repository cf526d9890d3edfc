use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Fisher information together with the expected log-likelihood derivative
/// matrices `P_r = E(U Uᵀ U_r)` and `Q_r = −E(j U_r)`, one pair per
/// parameter.
#[derive(Debug, Clone)]
pub struct CumulantSet {
    pub info: DMatrix<f64>,
    pub p: Vec<DMatrix<f64>>,
    pub q: Vec<DMatrix<f64>>,
}

/// The two combinations the adjustment formulas actually consume:
/// `P_s + Q_s` and `P_s/3 + Q_s/2`.
#[derive(Debug, Clone)]
pub struct CombinedCumulants {
    pub info: DMatrix<f64>,
    pub sum: Vec<DMatrix<f64>>,
    pub weighted: Vec<DMatrix<f64>>,
}

impl CumulantSet {
    pub fn dim(&self) -> usize {
        self.info.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.info.ncols() != d || self.p.len() != d || self.q.len() != d {
            return Err(Error::argument(format!(
                "cumulant set needs a {d}x{d} information matrix and {d} P/Q matrices"
            )));
        }
        for m in self.p.iter().chain(self.q.iter()) {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::argument("P/Q matrices must be d x d"));
            }
        }
        Ok(())
    }

    pub fn combined(&self) -> CombinedCumulants {
        let sum = self.p.iter().zip(&self.q).map(|(p, q)| p + q).collect();
        let weighted = self
            .p
            .iter()
            .zip(&self.q)
            .map(|(p, q)| p / 3.0 + q / 2.0)
            .collect();
        CombinedCumulants {
            info: self.info.clone(),
            sum,
            weighted,
        }
    }
}

/// Dense third-order arrays `ν_{s,t,u} = E(U_s U_t U_u)` and
/// `ν_{s,tu} = E(U_s U_{tu})`, stored row-major as `[s][t][u]`.
#[derive(Debug, Clone)]
pub struct CumulantTensor {
    d: usize,
    pub nu3: Vec<f64>,
    pub nu21: Vec<f64>,
    pub info: DMatrix<f64>,
}

impl CumulantTensor {
    pub fn new(info: DMatrix<f64>, nu3: Vec<f64>, nu21: Vec<f64>) -> Result<Self> {
        let d = info.nrows();
        if info.ncols() != d || nu3.len() != d * d * d || nu21.len() != d * d * d {
            return Err(Error::argument(
                "tensor sizes do not match the information matrix",
            ));
        }
        Ok(CumulantTensor { d, nu3, nu21, info })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn nu3(&self, s: usize, t: usize, u: usize) -> f64 {
        self.nu3[(s * self.d + t) * self.d + u]
    }

    #[inline]
    pub fn nu21(&self, s: usize, t: usize, u: usize) -> f64 {
        self.nu21[(s * self.d + t) * self.d + u]
    }

    /// Packs the arrays into per-parameter matrices: `P_s[t,u] = ν_{s,t,u}`,
    /// `Q_s[t,u] = ν_{s,tu}`.
    pub fn to_cumulant_set(&self) -> CumulantSet {
        let d = self.d;
        let p = (0..d)
            .map(|s| DMatrix::from_fn(d, d, |t, u| self.nu3(s, t, u)))
            .collect();
        let q = (0..d)
            .map(|s| DMatrix::from_fn(d, d, |t, u| self.nu21(s, t, u)))
            .collect();
        CumulantSet {
            info: self.info.clone(),
            p,
            q,
        }
    }

    pub fn from_cumulant_set(set: &CumulantSet) -> Result<Self> {
        set.validate()?;
        let d = set.dim();
        let mut nu3 = vec![0.0; d * d * d];
        let mut nu21 = vec![0.0; d * d * d];
        for s in 0..d {
            for t in 0..d {
                for u in 0..d {
                    nu3[(s * d + t) * d + u] = set.p[s][(t, u)];
                    nu21[(s * d + t) * d + u] = set.q[s][(t, u)];
                }
            }
        }
        CumulantTensor::new(set.info.clone(), nu3, nu21)
    }
}
