//! Beta-binomial regression with covariates on the mean `μ_i` and on the
//! overdispersion `φ_i ∈ (0, 1)`.
//!
//! Expected values of log-likelihood derivatives are computed exactly by
//! summing over the `m_i + 1` possible outcomes of each observation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::betareg::constant_on_design;
use crate::doubleindex::{chain_rule, Design, LocalMoments};
use crate::engine::{CombinedCumulants, CumulantSet, ModelContract, ParameterPoint};
use crate::error::{Error, Result};
use crate::linalg::{least_squares, rank};
use crate::links::Link;
use crate::special::ln_gamma;

/// Default largest number of trials accepted by the exhaustive expectations.
pub const DEFAULT_MAX_TRIALS: u64 = 10_000;

fn check_params(mu: f64, phi: f64) -> Result<()> {
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::domain(format!(
            "beta-binomial mean {mu} outside (0,1)"
        )));
    }
    if !(phi > 0.0 && phi < 1.0) {
        return Err(Error::domain(format!(
            "beta-binomial dispersion {phi} outside (0,1)"
        )));
    }
    Ok(())
}

fn ln_choose(m: u64, y: u64) -> f64 {
    ln_gamma(m as f64 + 1.0) - ln_gamma(y as f64 + 1.0) - ln_gamma((m - y) as f64 + 1.0)
}

/// Log probability of `y` successes in `m` trials.
pub fn betabin_logpmf(y: u64, m: u64, mu: f64, phi: f64) -> Result<f64> {
    check_params(mu, phi)?;
    if y > m {
        return Err(Error::domain(format!("successes {y} exceed trials {m}")));
    }
    let mut lp = ln_choose(m, y);
    for j in 0..y {
        lp += ((1.0 - phi) * mu + j as f64 * phi).ln();
    }
    for j in 0..(m - y) {
        lp += ((1.0 - mu) * (1.0 - phi) + j as f64 * phi).ln();
    }
    for j in 0..m {
        lp -= ((1.0 - phi) + j as f64 * phi).ln();
    }
    Ok(lp)
}

/// First and second derivatives of one observation's log-likelihood with
/// respect to `(μ, φ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaBinDerivatives {
    pub u_mu: f64,
    pub u_phi: f64,
    pub u_mumu: f64,
    pub u_muphi: f64,
    pub u_phiphi: f64,
}

pub fn betabin_derivatives(y: u64, m: u64, mu: f64, phi: f64) -> Result<BetaBinDerivatives> {
    check_params(mu, phi)?;
    if y > m {
        return Err(Error::domain(format!("successes {y} exceed trials {m}")));
    }
    let tables = SumTables::new(m, mu, phi);
    Ok(tables.derivatives(y))
}

/// Prefix sums over `j` of the terms entering the derivatives, so that every
/// outcome `y ∈ 0..=m` is evaluated in constant time.
struct SumTables {
    m: usize,
    phi: f64,
    // E-terms summed over j < k
    e_inv: Vec<f64>,
    e_lin: Vec<f64>,
    e_inv2: Vec<f64>,
    e_j2: Vec<f64>,
    e_quad: Vec<f64>,
    e_log: Vec<f64>,
    // F-terms summed over j < k
    f_inv: Vec<f64>,
    f_lin: Vec<f64>,
    f_inv2: Vec<f64>,
    f_j2: Vec<f64>,
    f_quad: Vec<f64>,
    f_log: Vec<f64>,
    // G-terms summed over j < m
    g_lin: f64,
    g_quad: f64,
    g_log: f64,
}

impl SumTables {
    fn new(m: u64, mu: f64, phi: f64) -> Self {
        let m = m as usize;
        let mut t = SumTables {
            m,
            phi,
            e_inv: vec![0.0; m + 1],
            e_lin: vec![0.0; m + 1],
            e_inv2: vec![0.0; m + 1],
            e_j2: vec![0.0; m + 1],
            e_quad: vec![0.0; m + 1],
            e_log: vec![0.0; m + 1],
            f_inv: vec![0.0; m + 1],
            f_lin: vec![0.0; m + 1],
            f_inv2: vec![0.0; m + 1],
            f_j2: vec![0.0; m + 1],
            f_quad: vec![0.0; m + 1],
            f_log: vec![0.0; m + 1],
            g_lin: 0.0,
            g_quad: 0.0,
            g_log: 0.0,
        };
        let mu_c = 1.0 - mu;
        for k in 0..m {
            let j = k as f64;
            let e = (1.0 - phi) * mu + j * phi;
            let f = mu_c * (1.0 - phi) + j * phi;
            let g = (1.0 - phi) + j * phi;
            t.e_inv[k + 1] = t.e_inv[k] + 1.0 / e;
            t.e_lin[k + 1] = t.e_lin[k] + (j - mu) / e;
            t.e_inv2[k + 1] = t.e_inv2[k] + 1.0 / (e * e);
            t.e_j2[k + 1] = t.e_j2[k] + j / (e * e);
            t.e_quad[k + 1] = t.e_quad[k] + ((mu - j) / e).powi(2);
            t.e_log[k + 1] = t.e_log[k] + e.ln();
            t.f_inv[k + 1] = t.f_inv[k] + 1.0 / f;
            t.f_lin[k + 1] = t.f_lin[k] + (j + mu - 1.0) / f;
            t.f_inv2[k + 1] = t.f_inv2[k] + 1.0 / (f * f);
            t.f_j2[k + 1] = t.f_j2[k] + j / (f * f);
            t.f_quad[k + 1] = t.f_quad[k] + ((mu + j - 1.0) / f).powi(2);
            t.f_log[k + 1] = t.f_log[k] + f.ln();
            t.g_lin += (j - 1.0) / g;
            t.g_quad += ((j - 1.0) / g).powi(2);
            t.g_log += g.ln();
        }
        t
    }

    fn derivatives(&self, y: u64) -> BetaBinDerivatives {
        let a = y as usize;
        let b = self.m - a;
        let one_minus_phi = 1.0 - self.phi;
        BetaBinDerivatives {
            u_mu: one_minus_phi * (self.e_inv[a] - self.f_inv[b]),
            u_phi: self.e_lin[a] + self.f_lin[b] - self.g_lin,
            u_mumu: -one_minus_phi * one_minus_phi * (self.e_inv2[a] + self.f_inv2[b]),
            u_muphi: -self.e_j2[a] + self.f_j2[b],
            u_phiphi: -self.e_quad[a] - self.f_quad[b] + self.g_quad,
        }
    }

    fn pmf(&self, y: u64) -> f64 {
        let a = y as usize;
        let b = self.m - a;
        (ln_choose(self.m as u64, y) + self.e_log[a] + self.f_log[b] - self.g_log).exp()
    }
}

/// The sixteen expectations `L1..L16` of one observation, stored zero-based
/// (`l[0]` is `L1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LExpectations {
    pub l: [f64; 16],
}

impl LExpectations {
    /// `L_k` with one-based `k`.
    pub fn get(&self, k: usize) -> f64 {
        self.l[k - 1]
    }

    /// Moments on the `(μ, φ)` scale transformed to the predictor scale.
    pub fn local_moments(&self, dmu: (f64, f64), dphi: (f64, f64)) -> LocalMoments {
        let l = |k: usize| self.l[k - 1];
        chain_rule(
            [l(9), l(12), l(16)],
            [l(4), l(5), l(6), l(7)],
            [[l(8), l(10), l(11)], [l(13), l(14), l(15)]],
            dmu,
            dphi,
        )
    }
}

pub fn betabin_l_expectations(m: u64, mu: f64, phi: f64) -> Result<LExpectations> {
    betabin_l_expectations_capped(m, mu, phi, DEFAULT_MAX_TRIALS)
}

pub fn betabin_l_expectations_capped(m: u64, mu: f64, phi: f64, cap: u64) -> Result<LExpectations> {
    check_params(mu, phi)?;
    if m > cap {
        return Err(Error::Resource(format!(
            "{m} trials exceed the exhaustive-summation cap of {cap}"
        )));
    }
    let tables = SumTables::new(m, mu, phi);
    let mut l = [0.0; 16];
    for y in 0..=m {
        let pr = tables.pmf(y);
        let d = tables.derivatives(y);
        let (um, up) = (d.u_mu, d.u_phi);
        let terms = [
            d.u_mumu,
            d.u_muphi,
            d.u_phiphi,
            um * um * um,
            um * um * up,
            um * up * up,
            up * up * up,
            d.u_mumu * um,
            um * um,
            um * d.u_muphi,
            um * d.u_phiphi,
            um * up,
            up * d.u_mumu,
            up * d.u_muphi,
            up * d.u_phiphi,
            up * up,
        ];
        for (acc, t) in l.iter_mut().zip(terms) {
            *acc += pr * t;
        }
    }
    Ok(LExpectations { l })
}

#[derive(Debug, Clone)]
pub struct BetaBinData {
    pub y: Vec<u64>,
    pub m: Vec<u64>,
    pub x: DMatrix<f64>,
    pub z: DMatrix<f64>,
}

impl BetaBinData {
    pub fn new(y: Vec<u64>, m: Vec<u64>, x: DMatrix<f64>, z: DMatrix<f64>) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::argument("no observations"));
        }
        if m.len() != n || x.nrows() != n || z.nrows() != n {
            return Err(Error::argument("data lengths do not match"));
        }
        if x.ncols() == 0 || z.ncols() == 0 {
            return Err(Error::argument("both designs need at least one column"));
        }
        for i in 0..n {
            if m[i] < 1 || y[i] > m[i] {
                return Err(Error::argument(format!(
                    "observation {}: need 0 <= y <= m and m >= 1 (y = {}, m = {})",
                    i + 1,
                    y[i],
                    m[i]
                )));
            }
        }
        if x.iter().chain(z.iter()).any(|v| !v.is_finite()) {
            return Err(Error::argument("designs contain non-finite values"));
        }
        if rank(&x, 1e-10) < x.ncols() {
            return Err(Error::argument("mean design is rank deficient"));
        }
        if rank(&z, 1e-10) < z.ncols() {
            return Err(Error::argument("precision design is rank deficient"));
        }
        Ok(BetaBinData { y, m, x, z })
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
pub struct BetaBinLinks {
    pub mean: Link,
    pub precision: Link,
}

impl Default for BetaBinLinks {
    fn default() -> Self {
        BetaBinLinks {
            mean: Link::Logit,
            precision: Link::Logit,
        }
    }
}

impl BetaBinLinks {
    pub fn new(mean: Link, precision: Link) -> Result<Self> {
        if !matches!(mean, Link::Logit | Link::Probit) {
            return Err(Error::argument(format!(
                "mean link '{mean}' is not supported"
            )));
        }
        if !matches!(precision, Link::Logit | Link::Identity) {
            return Err(Error::argument(format!(
                "dispersion link '{precision}' is not supported"
            )));
        }
        Ok(BetaBinLinks { mean, precision })
    }
}

/// Per-observation quantities at one parameter value.
#[derive(Debug, Clone)]
pub struct BetaBinWorkspace {
    pub mu: Vec<f64>,
    pub phi: Vec<f64>,
    /// `(dμ/dη, d²μ/dη²)`.
    pub dmu: Vec<(f64, f64)>,
    /// `(dφ/dζ, d²φ/dζ²)`.
    pub dphi: Vec<(f64, f64)>,
}

impl BetaBinWorkspace {
    pub fn new(theta: &[f64], data: &BetaBinData, links: BetaBinLinks) -> Result<Self> {
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
        let mut ws = BetaBinWorkspace {
            mu: Vec::with_capacity(n),
            phi: Vec::with_capacity(n),
            dmu: Vec::with_capacity(n),
            dphi: Vec::with_capacity(n),
        };
        for i in 0..n {
            let mu = links.mean.inverse(eta[i]);
            let phi = links.precision.inverse(zeta[i]);
            check_params(mu, phi).map_err(|e| match e {
                Error::Domain(msg) => Error::Domain(format!("observation {}: {msg}", i + 1)),
                other => other,
            })?;
            ws.mu.push(mu);
            ws.phi.push(phi);
            ws.dmu.push((links.mean.d1(eta[i]), links.mean.d2(eta[i])));
            ws.dphi
                .push((links.precision.d1(zeta[i]), links.precision.d2(zeta[i])));
        }
        Ok(ws)
    }

    fn local(&self, data: &BetaBinData) -> Result<Vec<LocalMoments>> {
        (0..data.n())
            .map(|i| {
                let l = betabin_l_expectations(data.m[i], self.mu[i], self.phi[i])?;
                Ok(l.local_moments(self.dmu[i], self.dphi[i]))
            })
            .collect()
    }
}

fn design(data: &BetaBinData) -> Design<'_> {
    Design {
        x: &data.x,
        z: &data.z,
    }
}

pub fn betabin_loglik(theta: &[f64], data: &BetaBinData, links: BetaBinLinks) -> Result<f64> {
    let ws = BetaBinWorkspace::new(theta, data, links)?;
    (0..data.n()).try_fold(0.0, |acc, i| {
        Ok(acc + betabin_logpmf(data.y[i], data.m[i], ws.mu[i], ws.phi[i])?)
    })
}

pub fn betabin_score(
    theta: &[f64],
    data: &BetaBinData,
    links: BetaBinLinks,
) -> Result<DVector<f64>> {
    let ws = BetaBinWorkspace::new(theta, data, links)?;
    let (n, p, q) = (data.n(), data.p(), data.q());
    let mut c_mu = DVector::zeros(n);
    let mut c_phi = DVector::zeros(n);
    for i in 0..n {
        let d = betabin_derivatives(data.y[i], data.m[i], ws.mu[i], ws.phi[i])?;
        c_mu[i] = d.u_mu * ws.dmu[i].0;
        c_phi[i] = d.u_phi * ws.dphi[i].0;
    }
    let mut u = DVector::zeros(p + q);
    u.rows_mut(0, p).copy_from(&(data.x.transpose() * c_mu));
    u.rows_mut(p, q).copy_from(&(data.z.transpose() * c_phi));
    Ok(u)
}

pub fn betabin_fisher_info(
    theta: &[f64],
    data: &BetaBinData,
    links: BetaBinLinks,
) -> Result<DMatrix<f64>> {
    let ws = BetaBinWorkspace::new(theta, data, links)?;
    Ok(design(data).info(&ws.local(data)?))
}

/// Information with raw `P_s`, `Q_s` matrices.
pub fn betabin_cumulant_set(
    theta: &[f64],
    data: &BetaBinData,
    links: BetaBinLinks,
) -> Result<CumulantSet> {
    let ws = BetaBinWorkspace::new(theta, data, links)?;
    Ok(design(data).cumulants(&ws.local(data)?))
}

/// Information with `P_s + Q_s` and `P_s/3 + Q_s/2` assembled directly.
pub fn betabin_combined_cumulants(
    theta: &[f64],
    data: &BetaBinData,
    links: BetaBinLinks,
) -> Result<CombinedCumulants> {
    let ws = BetaBinWorkspace::new(theta, data, links)?;
    Ok(design(data).combined(&ws.local(data)?))
}

/// Least squares of empirical logits for `β`; moment estimate of the
/// overdispersion, clamped to `[0.01, 0.9]`, for `γ`.
pub fn betabin_default_start(data: &BetaBinData, links: BetaBinLinks) -> Result<ParameterPoint> {
    let n = data.n();
    let target = DVector::from_fn(n, |i, _| {
        let pr = (data.y[i] as f64 + 0.5) / (data.m[i] as f64 + 1.0);
        links.mean.apply(pr).unwrap_or(0.0)
    });
    let beta = least_squares(&data.x, &target)?;
    let eta = &data.x * &beta;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..n {
        let mu = links.mean.inverse(eta[i]);
        let m = data.m[i] as f64;
        let base = m * mu * (1.0 - mu);
        num += (data.y[i] as f64 - m * mu).powi(2) - base;
        den += base * (m - 1.0);
    }
    let phi0 = num / den;
    let phi0 = if phi0.is_finite() {
        phi0.clamp(0.01, 0.9)
    } else {
        0.1
    };
    let gamma = constant_on_design(&data.z, links.precision.apply(phi0)?)?;
    let mut theta: Vec<f64> = beta.iter().copied().collect();
    theta.extend(gamma.iter());
    ParameterPoint::new(theta, data.p(), data.q())
}

#[derive(Debug, Clone)]
pub struct BetaBinModel {
    pub data: BetaBinData,
    pub links: BetaBinLinks,
}

impl BetaBinModel {
    pub fn new(data: BetaBinData, links: BetaBinLinks) -> Self {
        BetaBinModel { data, links }
    }
}

impl ModelContract for BetaBinModel {
    fn dimensions(&self) -> (usize, usize) {
        (self.data.p(), self.data.q())
    }

    fn log_likelihood(&self, theta: &[f64]) -> Result<f64> {
        betabin_loglik(theta, &self.data, self.links)
    }

    fn score(&self, theta: &[f64]) -> Result<DVector<f64>> {
        betabin_score(theta, &self.data, self.links)
    }

    fn cumulants(&self, theta: &[f64]) -> Result<CumulantSet> {
        betabin_cumulant_set(theta, &self.data, self.links)
    }

    fn fisher_information(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        betabin_fisher_info(theta, &self.data, self.links)
    }

    fn adjustment_cumulants(&self, theta: &[f64]) -> Result<CombinedCumulants> {
        betabin_combined_cumulants(theta, &self.data, self.links)
    }

    fn default_start(&self) -> Result<ParameterPoint> {
        betabin_default_start(&self.data, self.links)
    }

    fn linear_predictors(&self, theta: &[f64]) -> Option<Vec<f64>> {
        let p = self.data.p();
        let mut out: Vec<f64> = (&self.data.x * DVector::from_column_slice(theta.get(..p)?))
            .iter()
            .copied()
            .collect();
        if self.links.precision == Link::Logit {
            let zeta = &self.data.z * DVector::from_column_slice(theta.get(p..)?);
            out.extend(zeta.iter());
        }
        Some(out)
    }
}
