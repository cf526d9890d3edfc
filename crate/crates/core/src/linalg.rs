use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest accepted condition number of the diagonally scaled matrix.
pub const MAX_CONDITION: f64 = 1e12;

/// Cholesky factor of a symmetric positive definite matrix, with a scale-free
/// condition estimate.
///
/// The condition number is taken on `D^{-1/2} A D^{-1/2}` (unit diagonal), so
/// rescaling a parameter does not change it.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    condition: f64,
}

impl SpdFactor {
    pub fn new(matrix: &DMatrix<f64>) -> Result<Self> {
        let n = matrix.nrows();
        if n == 0 || matrix.ncols() != n {
            return Err(Error::argument("matrix must be square and non-empty"));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical(
                "matrix has non-finite entries",
                f64::INFINITY,
            ));
        }
        let diag = matrix.diagonal();
        if diag.iter().any(|&v| v <= 0.0) {
            return Err(Error::numerical(
                "matrix is not positive definite (non-positive diagonal)",
                f64::INFINITY,
            ));
        }
        let scale: DVector<f64> = diag.map(|v| 1.0 / v.sqrt());
        let scaled = DMatrix::from_fn(n, n, |i, j| {
            0.5 * (matrix[(i, j)] + matrix[(j, i)]) * scale[i] * scale[j]
        });
        let eig = scaled.clone().symmetric_eigenvalues();
        let max = eig.max();
        let min = eig.min();
        let condition = if min > 0.0 { max / min } else { f64::INFINITY };
        if !(condition <= MAX_CONDITION) {
            return Err(Error::numerical(
                "matrix is singular or indefinite",
                condition,
            ));
        }
        let sym = DMatrix::from_fn(n, n, |i, j| 0.5 * (matrix[(i, j)] + matrix[(j, i)]));
        let chol = sym
            .cholesky()
            .ok_or_else(|| Error::numerical("Cholesky factorization failed", condition))?;
        Ok(SpdFactor { chol, condition })
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }

    pub fn solve_matrix(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(rhs)
    }

    /// Inverse, obtained by solving against the identity columns.
    pub fn inverse(&self) -> DMatrix<f64> {
        let inv = self.chol.inverse();
        let n = inv.nrows();
        DMatrix::from_fn(n, n, |i, j| 0.5 * (inv[(i, j)] + inv[(j, i)]))
    }
}

/// Numerical rank via the singular values, relative tolerance `tol`.
pub fn rank(matrix: &DMatrix<f64>, tol: f64) -> usize {
    if matrix.nrows() == 0 || matrix.ncols() == 0 {
        return 0;
    }
    let sv = matrix.clone().svd(false, false).singular_values;
    let max = sv.max();
    sv.iter().filter(|&&s| s > tol * max).count()
}

/// Ordinary least squares via the normal equations.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let xtx = x.transpose() * x;
    let xty = x.transpose() * y;
    let factor = SpdFactor::new(&xtx)?;
    Ok(factor.solve(&xty))
}
