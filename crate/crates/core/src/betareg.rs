//! Beta regression with linear predictors on both the mean and the
//! precision: `y_i ~ Beta(φ_i μ_i, φ_i (1 − μ_i))`, `g1(μ_i) = x_iᵀβ`,
//! `g2(φ_i) = z_iᵀγ`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::doubleindex::{chain_rule, Design, LocalMoments};
use crate::engine::{CombinedCumulants, CumulantSet, ModelContract, ParameterPoint};
use crate::error::{Error, Result};
use crate::linalg::{least_squares, rank};
use crate::links::Link;
use crate::special::{digamma, ln_gamma, tetragamma, trigamma};

/// Relative singular-value tolerance of the design rank check.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct BetaRegData {
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub z: DMatrix<f64>,
}

impl BetaRegData {
    pub fn new(y: DVector<f64>, x: DMatrix<f64>, z: DMatrix<f64>) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::argument("no observations"));
        }
        if x.nrows() != n || z.nrows() != n {
            return Err(Error::argument(
                "design rows do not match the response length",
            ));
        }
        if x.ncols() == 0 || z.ncols() == 0 {
            return Err(Error::argument("both designs need at least one column"));
        }
        if let Some(i) = y.iter().position(|&v| !(v > 0.0 && v < 1.0)) {
            return Err(Error::argument(format!(
                "observation {}: response {} is not strictly inside (0, 1)",
                i + 1,
                y[i]
            )));
        }
        if x.iter().chain(z.iter()).any(|v| !v.is_finite()) {
            return Err(Error::argument("designs contain non-finite values"));
        }
        if rank(&x, RANK_TOL) < x.ncols() {
            return Err(Error::argument("mean design is rank deficient"));
        }
        if rank(&z, RANK_TOL) < z.ncols() {
            return Err(Error::argument("precision design is rank deficient"));
        }
        Ok(BetaRegData { y, x, z })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn q(&self) -> usize {
        self.z.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BetaRegLinks {
    pub mean: Link,
    pub precision: Link,
}

impl Default for BetaRegLinks {
    fn default() -> Self {
        BetaRegLinks {
            mean: Link::Logit,
            precision: Link::Log,
        }
    }
}

impl BetaRegLinks {
    pub fn new(mean: Link, precision: Link) -> Result<Self> {
        if !matches!(mean, Link::Logit | Link::Probit) {
            return Err(Error::argument(format!(
                "mean link '{mean}' is not supported"
            )));
        }
        if !matches!(precision, Link::Log | Link::Identity) {
            return Err(Error::argument(format!(
                "precision link '{precision}' is not supported"
            )));
        }
        Ok(BetaRegLinks { mean, precision })
    }
}

/// Log of the beta density with mean `μ` and precision `φ`.
pub fn betareg_logdensity(y: f64, mu: f64, phi: f64) -> Result<f64> {
    if !(y > 0.0 && y < 1.0) {
        return Err(Error::domain(format!("beta response {y} outside (0,1)")));
    }
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::domain(format!("beta mean {mu} outside (0,1)")));
    }
    if !(phi > 0.0 && phi.is_finite()) {
        return Err(Error::domain(format!(
            "beta precision {phi} is not positive"
        )));
    }
    Ok(logdensity(y.ln(), (-y).ln_1p(), mu, 1.0 - mu, phi))
}

fn logdensity(t: f64, s: f64, mu: f64, mu_c: f64, phi: f64) -> f64 {
    let (a, b) = (phi * mu, phi * mu_c);
    ln_gamma(phi) - ln_gamma(a) - ln_gamma(b) + (a - 1.0) * t + (b - 1.0) * s
}

/// Per-observation quantities at one parameter value.
#[derive(Debug, Clone)]
pub struct BetaRegWorkspace {
    pub mu: DVector<f64>,
    /// `1 − μ_i`, computed without cancellation.
    pub mu_c: DVector<f64>,
    pub phi: DVector<f64>,
    pub d1: DVector<f64>,
    pub d1_prime: DVector<f64>,
    pub d2: DVector<f64>,
    pub d2_prime: DVector<f64>,
    /// `T̃_i = log y_i − E(T_i)`.
    pub t_tilde: DVector<f64>,
    /// `S̃_i = log(1 − y_i) − E(S_i)`.
    pub s_tilde: DVector<f64>,
    pub kappa2: DVector<f64>,
    pub kappa3: DVector<f64>,
    /// `ψ⁽ˡ⁾(φ_i (1 − μ_i))` for `l = 1, 2`.
    pub psi1: DVector<f64>,
    pub psi2: DVector<f64>,
    /// `ψ⁽ˡ⁾(φ_i)` for `l = 1, 2`.
    pub omega1: DVector<f64>,
    pub omega2: DVector<f64>,
}

impl BetaRegWorkspace {
    pub fn new(theta: &[f64], data: &BetaRegData, links: BetaRegLinks) -> Result<Self> {
        let (n, p, q) = (data.n(), data.p(), data.q());
        if theta.len() != p + q {
            return Err(Error::argument(format!(
                "parameter has {} components, model expects {}",
                theta.len(),
                p + q
            )));
        }
        let eta = &data.x * DVector::from_column_slice(&theta[..p]);
        let zeta = &data.z * DVector::from_column_slice(&theta[p..]);
        let mut ws = BetaRegWorkspace {
            mu: DVector::zeros(n),
            mu_c: DVector::zeros(n),
            phi: DVector::zeros(n),
            d1: DVector::zeros(n),
            d1_prime: DVector::zeros(n),
            d2: DVector::zeros(n),
            d2_prime: DVector::zeros(n),
            t_tilde: DVector::zeros(n),
            s_tilde: DVector::zeros(n),
            kappa2: DVector::zeros(n),
            kappa3: DVector::zeros(n),
            psi1: DVector::zeros(n),
            psi2: DVector::zeros(n),
            omega1: DVector::zeros(n),
            omega2: DVector::zeros(n),
        };
        for i in 0..n {
            let mu = links.mean.inverse(eta[i]);
            let mu_c = links.mean.inverse_complement(eta[i]);
            let phi = links.precision.inverse(zeta[i]);
            if !(mu > 0.0 && mu_c > 0.0) {
                return Err(Error::domain(format!(
                    "observation {}: mean {mu} is on the boundary",
                    i + 1
                )));
            }
            if !(phi > 0.0 && phi.is_finite()) {
                return Err(Error::domain(format!(
                    "observation {}: precision {phi} is not positive",
                    i + 1
                )));
            }
            let (a, b) = (phi * mu, phi * mu_c);
            let y = data.y[i];
            ws.mu[i] = mu;
            ws.mu_c[i] = mu_c;
            ws.phi[i] = phi;
            ws.d1[i] = links.mean.d1(eta[i]);
            ws.d1_prime[i] = links.mean.d2(eta[i]);
            ws.d2[i] = links.precision.d1(zeta[i]);
            ws.d2_prime[i] = links.precision.d2(zeta[i]);
            let dg_phi = digamma(phi);
            ws.t_tilde[i] = y.ln() - (digamma(a) - dg_phi);
            ws.s_tilde[i] = (-y).ln_1p() - (digamma(b) - dg_phi);
            let (t1a, t1b) = (trigamma(a), trigamma(b));
            let (t2a, t2b) = (tetragamma(a), tetragamma(b));
            ws.kappa2[i] = t1a + t1b;
            ws.kappa3[i] = t2a - t2b;
            ws.psi1[i] = t1b;
            ws.psi2[i] = t2b;
            ws.omega1[i] = trigamma(phi);
            ws.omega2[i] = tetragamma(phi);
            if !(ws.kappa2[i] > 0.0 && ws.kappa2[i].is_finite()) {
                return Err(Error::numerical(
                    format!(
                        "observation {}: variance of the sufficient statistic degenerates",
                        i + 1
                    ),
                    f64::INFINITY,
                ));
            }
        }
        Ok(ws)
    }

    pub fn n(&self) -> usize {
        self.mu.len()
    }

    /// Expected derivative products of observation `i` on the predictor scale.
    pub fn local_moments(&self, i: usize) -> LocalMoments {
        let (mu, phi) = (self.mu[i], self.phi[i]);
        let (k2, k3) = (self.kappa2[i], self.kappa3[i]);
        let (p1, p2) = (self.psi1[i], self.psi2[i]);
        let (o1, o2) = (self.omega1[i], self.omega2[i]);
        // U_μ = φ D, U_φ = μ D + S̃ with D = T̃ − S̃.
        let m2 = [
            phi * phi * k2,
            phi * (mu * k2 - p1),
            mu * mu * k2 + (1.0 - 2.0 * mu) * p1 - o1,
        ];
        let m3 = [
            phi.powi(3) * k3,
            phi * phi * (mu * k3 + p2),
            phi * (mu * mu * k3 + 2.0 * mu * p2 - p2),
            mu.powi(3) * k3 + (3.0 * mu * mu - 3.0 * mu + 1.0) * p2 - o2,
        ];
        // U_μμ and U_φφ are non-random; U_μφ = D − φ(μκ₂ − ψ₁).
        let mixed = [[0.0, phi * k2, 0.0], [0.0, mu * k2 - p1, 0.0]];
        chain_rule(
            m2,
            m3,
            mixed,
            (self.d1[i], self.d1_prime[i]),
            (self.d2[i], self.d2_prime[i]),
        )
    }

    fn all_local(&self) -> Vec<LocalMoments> {
        (0..self.n()).map(|i| self.local_moments(i)).collect()
    }
}

pub fn betareg_loglik(theta: &[f64], data: &BetaRegData, links: BetaRegLinks) -> Result<f64> {
    let ws = BetaRegWorkspace::new(theta, data, links)?;
    Ok((0..data.n())
        .map(|i| {
            let y = data.y[i];
            logdensity(y.ln(), (-y).ln_1p(), ws.mu[i], ws.mu_c[i], ws.phi[i])
        })
        .sum())
}

pub fn betareg_score(
    theta: &[f64],
    data: &BetaRegData,
    links: BetaRegLinks,
) -> Result<DVector<f64>> {
    let ws = BetaRegWorkspace::new(theta, data, links)?;
    Ok(score_from(&ws, data))
}

fn score_from(ws: &BetaRegWorkspace, data: &BetaRegData) -> DVector<f64> {
    let (n, p) = (data.n(), data.p());
    let c_beta = DVector::from_fn(n, |i, _| {
        ws.phi[i] * ws.d1[i] * (ws.t_tilde[i] - ws.s_tilde[i])
    });
    let c_gamma = DVector::from_fn(n, |i, _| {
        ws.d2[i] * (ws.mu[i] * (ws.t_tilde[i] - ws.s_tilde[i]) + ws.s_tilde[i])
    });
    let mut u = DVector::zeros(p + data.q());
    u.rows_mut(0, p).copy_from(&(data.x.transpose() * c_beta));
    u.rows_mut(p, data.q())
        .copy_from(&(data.z.transpose() * c_gamma));
    u
}

pub fn betareg_fisher_info(
    theta: &[f64],
    data: &BetaRegData,
    links: BetaRegLinks,
) -> Result<DMatrix<f64>> {
    let ws = BetaRegWorkspace::new(theta, data, links)?;
    Ok(design(data).info(&ws.all_local()))
}

pub fn betareg_cumulant_set(
    theta: &[f64],
    data: &BetaRegData,
    links: BetaRegLinks,
) -> Result<CumulantSet> {
    let ws = BetaRegWorkspace::new(theta, data, links)?;
    Ok(design(data).cumulants(&ws.all_local()))
}

fn design(data: &BetaRegData) -> Design<'_> {
    Design {
        x: &data.x,
        z: &data.z,
    }
}

/// Least-squares start on the link scale with boundary-shrunk responses and
/// a method-of-moments precision.
pub fn betareg_default_start(data: &BetaRegData, links: BetaRegLinks) -> Result<ParameterPoint> {
    let n = data.n() as f64;
    let ystar = data.y.map(|y| (y * (n - 1.0) + 0.5) / n);
    let g = ystar.map(|y| links.mean.apply(y).unwrap_or(0.0));
    let beta = least_squares(&data.x, &g)?;
    let eta = &data.x * &beta;
    let mu = eta.map(|e| links.mean.inverse(e));
    let dof = (n - data.p() as f64).max(1.0);
    let resid_var = ystar
        .iter()
        .zip(mu.iter())
        .map(|(y, m)| (y - m).powi(2))
        .sum::<f64>()
        / dof;
    let mean_var = mu.iter().map(|m| m * (1.0 - m)).sum::<f64>() / n;
    let mut phi0 = mean_var / resid_var - 1.0;
    if !phi0.is_finite() {
        phi0 = 1e6;
    }
    let phi0 = phi0.clamp(1e-2, 1e6);
    let gamma = constant_on_design(&data.z, links.precision.apply(phi0)?)?;
    let mut theta: Vec<f64> = beta.iter().copied().collect();
    theta.extend(gamma.iter());
    ParameterPoint::new(theta, data.p(), data.q())
}

/// Coefficients reproducing the constant `value` on `z` (the intercept when
/// the first column is one).
pub(crate) fn constant_on_design(z: &DMatrix<f64>, value: f64) -> Result<DVector<f64>> {
    let q = z.ncols();
    if z.column(0).iter().all(|&v| v == 1.0) {
        let mut g = DVector::zeros(q);
        g[0] = value;
        return Ok(g);
    }
    least_squares(z, &DVector::from_element(z.nrows(), value))
}

#[derive(Debug, Clone)]
pub struct BetaRegModel {
    pub data: BetaRegData,
    pub links: BetaRegLinks,
}

impl BetaRegModel {
    pub fn new(data: BetaRegData, links: BetaRegLinks) -> Self {
        BetaRegModel { data, links }
    }

    pub fn workspace(&self, theta: &[f64]) -> Result<BetaRegWorkspace> {
        BetaRegWorkspace::new(theta, &self.data, self.links)
    }
}

impl ModelContract for BetaRegModel {
    fn dimensions(&self) -> (usize, usize) {
        (self.data.p(), self.data.q())
    }

    fn log_likelihood(&self, theta: &[f64]) -> Result<f64> {
        betareg_loglik(theta, &self.data, self.links)
    }

    fn score(&self, theta: &[f64]) -> Result<DVector<f64>> {
        betareg_score(theta, &self.data, self.links)
    }

    fn cumulants(&self, theta: &[f64]) -> Result<CumulantSet> {
        betareg_cumulant_set(theta, &self.data, self.links)
    }

    fn fisher_information(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        betareg_fisher_info(theta, &self.data, self.links)
    }

    fn adjustment_cumulants(&self, theta: &[f64]) -> Result<CombinedCumulants> {
        let ws = self.workspace(theta)?;
        Ok(design(&self.data).combined(&ws.all_local()))
    }

    fn default_start(&self) -> Result<ParameterPoint> {
        betareg_default_start(&self.data, self.links)
    }

    fn linear_predictors(&self, theta: &[f64]) -> Option<Vec<f64>> {
        let p = self.data.p();
        let eta = &self.data.x * DVector::from_column_slice(theta.get(..p)?);
        Some(eta.iter().copied().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn single(y: f64) -> BetaRegData {
        BetaRegData::new(
            DVector::from_element(1, y),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap()
    }

    #[test]
    fn uniform_case_has_zero_log_density() {
        assert!(betareg_logdensity(0.3, 0.5, 2.0).unwrap().abs() < 1e-14);
        let ll = betareg_loglik(&[0.0, 2f64.ln()], &single(0.3), BetaRegLinks::default()).unwrap();
        assert!(ll.abs() < 1e-14);
    }

    #[test]
    fn log_density_reference_value() {
        let v = betareg_logdensity(0.9, 0.9, 10.0).unwrap();
        assert!((v - 1.354_340_452_073_609).abs() < 1e-12);
    }

    #[test]
    fn symmetric_score_vanishes() {
        let u = betareg_score(&[0.0, 2f64.ln()], &single(0.5), BetaRegLinks::default()).unwrap();
        assert!(u[0].abs() < 1e-14);
    }

    #[test]
    fn intercept_information_at_half() {
        let info =
            betareg_fisher_info(&[0.0, 2f64.ln()], &single(0.5), BetaRegLinks::default()).unwrap();
        assert!((info[(0, 0)] - PI * PI / 12.0).abs() < 1e-12);
    }

    #[test]
    fn third_cumulant_vanishes_at_half() {
        let set = betareg_cumulant_set(&[0.0, 1.3], &single(0.4), BetaRegLinks::default()).unwrap();
        assert!(set.p[0][(0, 0)].abs() < 1e-14);
    }

    #[test]
    fn invalid_inputs() {
        assert!(betareg_logdensity(1.0, 0.5, 2.0).is_err());
        assert!(betareg_logdensity(0.5, 0.5, 0.0).is_err());
        let links = BetaRegLinks::new(Link::Logit, Link::Identity).unwrap();
        assert!(matches!(
            betareg_loglik(&[0.0, -1.0], &single(0.3), links),
            Err(Error::Domain(_))
        ));
        assert!(BetaRegLinks::new(Link::Log, Link::Log).is_err());
        assert!(BetaRegData::new(
            DVector::from_element(2, 0.5),
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 1.0, 2.0]),
            DMatrix::from_element(2, 1, 1.0)
        )
        .is_err());
    }

    #[test]
    fn constant_response_starts_at_zero() {
        let data = BetaRegData::new(
            DVector::from_element(4, 0.5),
            DMatrix::from_element(4, 1, 1.0),
            DMatrix::from_element(4, 1, 1.0),
        )
        .unwrap();
        let start = betareg_default_start(&data, BetaRegLinks::default()).unwrap();
        assert!(start.theta[0].abs() < 1e-14);
        assert!(start.theta[1].is_finite());
    }
}
