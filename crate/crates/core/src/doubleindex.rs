//! Assembly of information and third-order cumulant matrices for models in
//! which each observation depends on the parameters only through a mean
//! predictor `η_i = x_iᵀβ` and a precision predictor `ζ_i = z_iᵀγ`.

use nalgebra::DMatrix;

use crate::engine::{CombinedCumulants, CumulantSet};

/// Expected log-likelihood derivative products of one observation on the
/// `(η, ζ)` scale. Index 0 is `η`, index 1 is `ζ`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LocalMoments {
    /// `E(ℓ_a ℓ_b)` for `ab ∈ {ηη, ηζ, ζζ}`.
    pub info: [f64; 3],
    /// `E(ℓ_a ℓ_b ℓ_c)` indexed by the number of `ζ`s among `a, b, c`.
    pub k3: [f64; 4],
    /// `E(ℓ_a ℓ_bc)`: `[a][bc]` with `bc ∈ {ηη, ηζ, ζζ}`.
    pub nu21: [[f64; 3]; 2],
}

pub(crate) struct Design<'a> {
    pub x: &'a DMatrix<f64>,
    pub z: &'a DMatrix<f64>,
}

impl Design<'_> {
    fn p(&self) -> usize {
        self.x.ncols()
    }

    fn dim(&self) -> usize {
        self.x.ncols() + self.z.ncols()
    }

    #[inline]
    fn entry(&self, i: usize, j: usize) -> (f64, usize) {
        let p = self.p();
        if j < p {
            (self.x[(i, j)], 0)
        } else {
            (self.z[(i, j - p)], 1)
        }
    }

    pub fn info(&self, local: &[LocalMoments]) -> DMatrix<f64> {
        let d = self.dim();
        let mut out = DMatrix::zeros(d, d);
        for (i, lm) in local.iter().enumerate() {
            for t in 0..d {
                let (gt, bt) = self.entry(i, t);
                if gt == 0.0 {
                    continue;
                }
                for u in t..d {
                    let (gu, bu) = self.entry(i, u);
                    out[(t, u)] += gt * gu * lm.info[bt + bu];
                }
            }
        }
        symmetrize_upper(&mut out);
        out
    }

    /// Builds one `d × d` matrix per parameter `s` with entries
    /// `Σ_i g_is g_it g_iu c_i(a_s, a_t, a_u)`.
    fn third_order<F>(&self, local: &[LocalMoments], coef: F) -> Vec<DMatrix<f64>>
    where
        F: Fn(&LocalMoments, usize, usize, usize) -> f64,
    {
        let d = self.dim();
        let mut out = vec![DMatrix::zeros(d, d); d];
        for (i, lm) in local.iter().enumerate() {
            let mut c = [[[0.0; 2]; 2]; 2];
            for (a, ca) in c.iter_mut().enumerate() {
                for (b, cb) in ca.iter_mut().enumerate() {
                    for (e, v) in cb.iter_mut().enumerate() {
                        *v = coef(lm, a, b, e);
                    }
                }
            }
            for (s, mat) in out.iter_mut().enumerate() {
                let (gs, bs) = self.entry(i, s);
                if gs == 0.0 {
                    continue;
                }
                for t in 0..d {
                    let (gt, bt) = self.entry(i, t);
                    if gt == 0.0 {
                        continue;
                    }
                    let gst = gs * gt;
                    for u in t..d {
                        let (gu, bu) = self.entry(i, u);
                        mat[(t, u)] += gst * gu * c[bs][bt][bu];
                    }
                }
            }
        }
        for mat in out.iter_mut() {
            symmetrize_upper(mat);
        }
        out
    }

    pub fn cumulants(&self, local: &[LocalMoments]) -> CumulantSet {
        CumulantSet {
            info: self.info(local),
            p: self.third_order(local, |lm, a, b, c| lm.k3[a + b + c]),
            q: self.third_order(local, |lm, a, b, c| lm.nu21[a][b + c]),
        }
    }

    pub fn combined(&self, local: &[LocalMoments]) -> CombinedCumulants {
        CombinedCumulants {
            info: self.info(local),
            sum: self.third_order(local, |lm, a, b, c| lm.k3[a + b + c] + lm.nu21[a][b + c]),
            weighted: self.third_order(local, |lm, a, b, c| {
                lm.k3[a + b + c] / 3.0 + lm.nu21[a][b + c] / 2.0
            }),
        }
    }
}

fn symmetrize_upper(m: &mut DMatrix<f64>) {
    let d = m.nrows();
    for t in 0..d {
        for u in 0..t {
            m[(t, u)] = m[(u, t)];
        }
    }
}

/// Chain rule from moments in the natural parameters `(μ, φ)` to the
/// predictor scale.
///
/// `m2 = [E U_μ², E U_μU_φ, E U_φ²]`,
/// `m3 = [E U_μ³, E U_μ²U_φ, E U_μU_φ², E U_φ³]`,
/// `mixed[a][bc] = E(U_a U_bc)` over the natural parameters, and
/// `(d1, d1', d2, d2')` the first and second derivatives of `μ(η)` and `φ(ζ)`.
pub(crate) fn chain_rule(
    m2: [f64; 3],
    m3: [f64; 4],
    mixed: [[f64; 3]; 2],
    dmu: (f64, f64),
    dphi: (f64, f64),
) -> LocalMoments {
    let g = [dmu.0, dphi.0];
    let h = [dmu.1, dphi.1];
    let mut info = [0.0; 3];
    info[0] = m2[0] * g[0] * g[0];
    info[1] = m2[1] * g[0] * g[1];
    info[2] = m2[2] * g[1] * g[1];
    let k3 = [
        m3[0] * g[0].powi(3),
        m3[1] * g[0] * g[0] * g[1],
        m3[2] * g[0] * g[1] * g[1],
        m3[3] * g[1].powi(3),
    ];
    // ℓ_ηη = U_μμ g0² + U_μ h0, ℓ_ηζ = U_μφ g0 g1, ℓ_ζζ = U_φφ g1² + U_φ h1
    let mut nu21 = [[0.0; 3]; 2];
    for a in 0..2 {
        let ua_umu = m2[a];
        let ua_uphi = m2[a + 1];
        nu21[a][0] = g[a] * (mixed[a][0] * g[0] * g[0] + ua_umu * h[0]);
        nu21[a][1] = g[a] * mixed[a][1] * g[0] * g[1];
        nu21[a][2] = g[a] * (mixed[a][2] * g[1] * g[1] + ua_uphi * h[1]);
    }
    LocalMoments { info, k3, nu21 }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn info_is_bilinear_in_the_design() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, 1.0, -1.0, 1.0, 2.0]);
        let z = DMatrix::from_row_slice(3, 1, &[1.0, 1.0, 1.0]);
        let lm = LocalMoments {
            info: [2.0, 0.3, 1.5],
            k3: [0.1, 0.2, 0.3, 0.4],
            nu21: [[0.5, 0.6, 0.7], [0.8, 0.9, 1.0]],
        };
        let local = vec![lm; 3];
        let design = Design { x: &x, z: &z };
        let info = design.info(&local);
        let mut x2 = x.clone();
        x2.column_mut(1).scale_mut(2.0);
        let info2 = Design { x: &x2, z: &z }.info(&local);
        assert!((info2[(1, 1)] - 4.0 * info[(1, 1)]).abs() < 1e-12);
        assert!((info2[(1, 2)] - 2.0 * info[(1, 2)]).abs() < 1e-12);
        assert!((info2[(0, 0)] - info[(0, 0)]).abs() < 1e-12);
        let c = design.cumulants(&local);
        let comb = design.combined(&local);
        for s in 0..3 {
            let direct = &c.p[s] / 3.0 + &c.q[s] / 2.0;
            assert!((direct - &comb.weighted[s]).amax() < 1e-12);
            assert!((&c.p[s] - c.p[s].transpose()).amax() < 1e-12);
        }
        // P_s[t,u] is symmetric in all three indices
        for s in 0..3 {
            for t in 0..3 {
                for u in 0..3 {
                    assert!((c.p[s][(t, u)] - c.p[t][(s, u)]).abs() < 1e-12);
                }
            }
        }
    }
}
