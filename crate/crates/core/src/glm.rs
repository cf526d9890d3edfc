//! Generalized linear models in exponential dispersion form, with the
//! closed-form mean and median bias-reducing adjustments.
//!
//! The response is stored on the mean scale: binomial data enter as
//! successes and trials and are held as proportions with weights `m_i`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::engine::{CumulantSet, Method, ModelContract, ParameterPoint};
use crate::error::{Error, Result};
use crate::linalg::{least_squares, SpdFactor};
use crate::links::Link;
use crate::special::{digamma, ln_gamma, tetragamma, trigamma};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Binomial,
    Poisson,
    Gamma,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Binomial => "binomial",
            Family::Poisson => "poisson",
            Family::Gamma => "gamma",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "binomial" => Ok(Family::Binomial),
            "poisson" => Ok(Family::Poisson),
            "gamma" => Ok(Family::Gamma),
            other => Err(Error::argument(format!("unknown GLM family '{other}'"))),
        }
    }

    pub fn supports_link(self, link: Link) -> bool {
        match self {
            Family::Binomial => matches!(link, Link::Logit | Link::Probit),
            Family::Poisson | Family::Gamma => link == Link::Log,
        }
    }

    fn check_mean(self, mu: f64) -> Result<()> {
        let ok = match self {
            Family::Binomial => mu > 0.0 && mu < 1.0,
            Family::Poisson | Family::Gamma => mu > 0.0 && mu.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::numerical(
                format!(
                    "fitted mean {mu} is on the boundary of the {} mean space",
                    self.name()
                ),
                f64::INFINITY,
            ))
        }
    }

    /// `(V(μ), V′(μ))`.
    fn variance(self, mu: f64) -> (f64, f64) {
        match self {
            Family::Binomial => (mu * (1.0 - mu), 1.0 - 2.0 * mu),
            Family::Poisson => (mu, 1.0),
            Family::Gamma => (mu * mu, 2.0 * mu),
        }
    }
}

/// `a″(−m/φ)` and `a‴(−m/φ)` for the gamma family, where
/// `a(e) = 2{log Γ(−e) + e log(−e)}`.
pub fn gamma_dispersion_derivatives(m: f64, phi: f64) -> (f64, f64) {
    let nu = m / phi;
    let a2 = 2.0 * (trigamma(nu) - 1.0 / nu);
    let a3 = -2.0 * (tetragamma(nu) + 1.0 / (nu * nu));
    (a2, a3)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dispersion {
    Fixed(f64),
    Estimated,
}

#[derive(Debug, Clone)]
pub struct GlmData {
    pub x: DMatrix<f64>,
    /// Response on the mean scale.
    pub y: DVector<f64>,
    /// Observation weights (binomial trials).
    pub m: DVector<f64>,
}

impl GlmData {
    pub fn binomial(x: DMatrix<f64>, successes: &[f64], trials: &[f64]) -> Result<Self> {
        if successes.len() != x.nrows() || trials.len() != x.nrows() {
            return Err(Error::argument("response length does not match the design"));
        }
        for (i, (&s, &m)) in successes.iter().zip(trials).enumerate() {
            if !(m >= 1.0) || !(s >= 0.0) || s > m || s.fract() != 0.0 || m.fract() != 0.0 {
                return Err(Error::argument(format!(
                    "observation {}: need integer successes 0 <= y <= m with m >= 1",
                    i + 1
                )));
            }
        }
        let y = DVector::from_iterator(x.nrows(), successes.iter().zip(trials).map(|(s, m)| s / m));
        let m = DVector::from_column_slice(trials);
        Ok(GlmData { x, y, m })
    }

    pub fn new(x: DMatrix<f64>, y: &[f64], weights: Option<&[f64]>) -> Result<Self> {
        if y.len() != x.nrows() {
            return Err(Error::argument("response length does not match the design"));
        }
        let m = match weights {
            Some(w) if w.len() == y.len() => DVector::from_column_slice(w),
            Some(_) => return Err(Error::argument("weights length does not match the design")),
            None => DVector::from_element(y.len(), 1.0),
        };
        if m.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::argument("weights must be positive"));
        }
        Ok(GlmData {
            x,
            y: DVector::from_column_slice(y),
            m,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }
}

/// Every per-observation quantity entering the adjustments at one `(β, φ)`.
#[derive(Debug, Clone)]
pub struct GlmWorkspace {
    pub x: DMatrix<f64>,
    pub m: DVector<f64>,
    pub phi: f64,
    pub estimate_phi: bool,
    pub mu: DVector<f64>,
    pub d: DVector<f64>,
    pub d_prime: DVector<f64>,
    pub v: DVector<f64>,
    pub v_prime: DVector<f64>,
    pub w: DVector<f64>,
    /// `(XᵀWX)⁻¹`.
    pub xtwx_inv: DMatrix<f64>,
    pub hat: DVector<f64>,
    /// `h̃_{r,i}` stored as `(i, r)`.
    pub h_tilde: DMatrix<f64>,
    pub a2: DVector<f64>,
    pub a3: DVector<f64>,
}

impl GlmWorkspace {
    pub fn new(
        data: &GlmData,
        family: Family,
        link: Link,
        beta: &[f64],
        phi: f64,
        estimate_phi: bool,
    ) -> Result<Self> {
        let (n, p) = (data.n(), data.p());
        if beta.len() != p {
            return Err(Error::argument(
                "coefficient length does not match the design",
            ));
        }
        if !(phi > 0.0 && phi.is_finite()) {
            return Err(Error::domain(format!(
                "dispersion must be positive, got {phi}"
            )));
        }
        if estimate_phi && family != Family::Gamma {
            return Err(Error::argument(
                "only the gamma family has an estimable dispersion",
            ));
        }
        let eta = &data.x * DVector::from_column_slice(beta);
        let mut mu = DVector::zeros(n);
        let mut d = DVector::zeros(n);
        let mut d_prime = DVector::zeros(n);
        let mut v = DVector::zeros(n);
        let mut v_prime = DVector::zeros(n);
        let mut w = DVector::zeros(n);
        for i in 0..n {
            mu[i] = link.inverse(eta[i]);
            family.check_mean(mu[i])?;
            d[i] = link.d1(eta[i]);
            d_prime[i] = link.d2(eta[i]);
            let (vi, vpi) = family.variance(mu[i]);
            v[i] = vi;
            v_prime[i] = vpi;
            w[i] = data.m[i] * d[i] * d[i] / vi;
            if !(w[i] > 0.0 && w[i].is_finite()) {
                return Err(Error::numerical(
                    format!("working weight of observation {} is not positive", i + 1),
                    f64::INFINITY,
                ));
            }
        }
        let xtwx = weighted_crossprod(&data.x, &w);
        let xtwx_inv = SpdFactor::new(&xtwx)?.inverse();
        let mut hat = DVector::zeros(n);
        let mut h_tilde = DMatrix::zeros(n, p);
        for i in 0..n {
            let xi = data.x.row(i).transpose();
            let bx = &xtwx_inv * &xi;
            hat[i] = w[i] * xi.dot(&bx);
            for r in 0..p {
                h_tilde[(i, r)] = bx[r] * bx[r] * w[i] / xtwx_inv[(r, r)];
            }
        }
        let (mut a2, mut a3) = (DVector::zeros(n), DVector::zeros(n));
        if estimate_phi {
            for i in 0..n {
                let (x2, x3) = gamma_dispersion_derivatives(data.m[i], phi);
                a2[i] = x2;
                a3[i] = x3;
            }
        }
        Ok(GlmWorkspace {
            x: data.x.clone(),
            m: data.m.clone(),
            phi,
            estimate_phi,
            mu,
            d,
            d_prime,
            v,
            v_prime,
            w,
            xtwx_inv,
            hat,
            h_tilde,
            a2,
            a3,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    fn dispersion_sums(&self) -> (f64, f64) {
        let s2 = (0..self.n()).map(|i| self.m[i].powi(2) * self.a2[i]).sum();
        let s3 = (0..self.n()).map(|i| self.m[i].powi(3) * self.a3[i]).sum();
        (s2, s3)
    }
}

fn weighted_crossprod(x: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let mut wx = x.clone();
    for (i, mut row) in wx.row_iter_mut().enumerate() {
        row *= w[i];
    }
    x.transpose() * wx
}

/// `Xᵀ diag(c) X`.
fn diag_crossprod(x: &DMatrix<f64>, c: impl Fn(usize) -> f64) -> DMatrix<f64> {
    let w = DVector::from_fn(x.nrows(), |i, _| c(i));
    weighted_crossprod(x, &w)
}

/// Information and the `P_s`, `Q_s` matrices in block form. The dispersion
/// row and column are present only when `φ` is estimated.
pub fn glm_cumulant_set(ws: &GlmWorkspace) -> CumulantSet {
    let (n, p) = (ws.n(), ws.p());
    let phi = ws.phi;
    let d = if ws.estimate_phi { p + 1 } else { p };
    let x = &ws.x;
    let mut info = DMatrix::zeros(d, d);
    info.view_mut((0, 0), (p, p))
        .copy_from(&(weighted_crossprod(x, &ws.w) / phi));
    let (s2, s3) = ws.dispersion_sums();
    if ws.estimate_phi {
        info[(p, p)] = s2 / (2.0 * phi.powi(4));
    }
    let mut pm = Vec::with_capacity(d);
    let mut qm = Vec::with_capacity(d);
    for s in 0..p {
        let o1 = |i: usize| x[(i, s)] * ws.d[i] * ws.v_prime[i] / (ws.v[i] * phi);
        let o3 = |i: usize| x[(i, s)] * ws.d_prime[i] / (ws.d[i] * phi);
        let mut ps = DMatrix::zeros(d, d);
        let mut qs = DMatrix::zeros(d, d);
        ps.view_mut((0, 0), (p, p))
            .copy_from(&diag_crossprod(x, |i| ws.w[i] * o1(i)));
        qs.view_mut((0, 0), (p, p))
            .copy_from(&diag_crossprod(x, |i| -ws.w[i] * (o1(i) - o3(i))));
        if ws.estimate_phi {
            for t in 0..p {
                let v: f64 = (0..n)
                    .map(|i| x[(i, t)] * ws.w[i] * x[(i, s)] / (phi * phi))
                    .sum();
                ps[(t, p)] = v;
                ps[(p, t)] = v;
                qs[(t, p)] = -v;
                qs[(p, t)] = -v;
            }
        }
        pm.push(ps);
        qm.push(qs);
    }
    if ws.estimate_phi {
        let mut ps = DMatrix::zeros(d, d);
        ps.view_mut((0, 0), (p, p))
            .copy_from(&(weighted_crossprod(x, &ws.w) / (phi * phi)));
        ps[(p, p)] = s3 / (2.0 * phi.powi(6));
        let mut qs = DMatrix::zeros(d, d);
        qs[(p, p)] = -s2 / phi.powi(5);
        pm.push(ps);
        qm.push(qs);
    }
    CumulantSet { info, p: pm, q: qm }
}

/// Closed-form adjustments: `(β adjustment, φ adjustment if estimated)`.
pub fn glm_closed_form_adjustments(
    ws: &GlmWorkspace,
    method: Method,
) -> Result<(DVector<f64>, Option<f64>)> {
    let (n, p) = (ws.n(), ws.p());
    let x = &ws.x;
    let xi = DVector::from_fn(n, |i, _| {
        ws.hat[i] * ws.d_prime[i] / (2.0 * ws.d[i] * ws.w[i])
    });
    let (s2, s3) = ws.dispersion_sums();
    let phi = ws.phi;
    let (inner, phi_adj) = match method {
        Method::Ml => return Ok((DVector::zeros(p), ws.estimate_phi.then_some(0.0))),
        Method::MeanBr => (
            xi,
            ws.estimate_phi
                .then(|| (p as f64 - 2.0) / (2.0 * phi) + s3 / (2.0 * phi * phi * s2)),
        ),
        Method::MedianBr => {
            let c = DVector::from_fn(n, |i, _| {
                ws.d[i] * ws.v_prime[i] / (6.0 * ws.v[i]) - ws.d_prime[i] / (2.0 * ws.d[i])
            });
            let mut u = DVector::zeros(p);
            for r in 0..p {
                let g = DVector::from_fn(n, |i, _| ws.h_tilde[(i, r)] * c[i]);
                let xtg = x.transpose() * g;
                u[r] = ws.xtwx_inv.column(r).dot(&xtg);
            }
            (
                xi + x * u,
                ws.estimate_phi
                    .then(|| p as f64 / (2.0 * phi) + s3 / (6.0 * phi * phi * s2)),
            )
        }
    };
    let wv = DVector::from_fn(n, |i, _| ws.w[i] * inner[i]);
    Ok((x.transpose() * wv, phi_adj))
}

/// A GLM exposed to the generic solver. With an estimated dispersion the
/// parameter is `(β, φ)` with `φ` on its natural scale.
#[derive(Debug, Clone)]
pub struct GlmModel {
    pub data: GlmData,
    pub family: Family,
    pub link: Link,
    pub dispersion: Dispersion,
}

impl GlmModel {
    pub fn new(data: GlmData, family: Family, link: Link, dispersion: Dispersion) -> Result<Self> {
        if !family.supports_link(link) {
            return Err(Error::argument(format!(
                "link '{link}' is not supported for the {} family",
                family.name()
            )));
        }
        match (family, dispersion) {
            (Family::Gamma, _) => {}
            (_, Dispersion::Fixed(phi)) if phi == 1.0 => {}
            _ => {
                return Err(Error::argument(format!(
                    "the {} family has dispersion fixed at 1",
                    family.name()
                )))
            }
        }
        if let Dispersion::Fixed(phi) = dispersion {
            if !(phi > 0.0) {
                return Err(Error::argument("fixed dispersion must be positive"));
            }
        }
        for i in 0..data.n() {
            let y = data.y[i];
            let ok = match family {
                Family::Binomial => (0.0..=1.0).contains(&y),
                Family::Poisson => y >= 0.0,
                Family::Gamma => y > 0.0,
            };
            if !ok || !y.is_finite() {
                return Err(Error::argument(format!(
                    "observation {}: response {y} outside the {} support",
                    i + 1,
                    family.name()
                )));
            }
        }
        Ok(GlmModel {
            data,
            family,
            link,
            dispersion,
        })
    }

    fn estimate_phi(&self) -> bool {
        matches!(self.dispersion, Dispersion::Estimated)
    }

    fn split<'a>(&self, theta: &'a [f64]) -> (&'a [f64], f64) {
        let p = self.data.p();
        match self.dispersion {
            Dispersion::Fixed(phi) => (&theta[..p], phi),
            Dispersion::Estimated => (&theta[..p], theta[p]),
        }
    }

    pub fn workspace(&self, theta: &[f64]) -> Result<GlmWorkspace> {
        let (beta, phi) = self.split(theta);
        GlmWorkspace::new(
            &self.data,
            self.family,
            self.link,
            beta,
            phi,
            self.estimate_phi(),
        )
    }

    fn means(&self, beta: &[f64]) -> Result<DVector<f64>> {
        let eta = &self.data.x * DVector::from_column_slice(beta);
        let mu = eta.map(|e| self.link.inverse(e));
        for &v in mu.iter() {
            if (self.family == Family::Binomial && v >= 1.0) || !(v > 0.0) {
                return Err(Error::domain(format!(
                    "fitted mean {v} outside the mean space"
                )));
            }
        }
        Ok(mu)
    }
}

impl ModelContract for GlmModel {
    fn dimensions(&self) -> (usize, usize) {
        (self.data.p(), usize::from(self.estimate_phi()))
    }

    fn log_likelihood(&self, theta: &[f64]) -> Result<f64> {
        let (beta, phi) = self.split(theta);
        if !(phi > 0.0) {
            return Err(Error::domain("dispersion must be positive"));
        }
        let mu = self.means(beta)?;
        let data = &self.data;
        let mut ll = 0.0;
        for i in 0..data.n() {
            let (y, m, mu) = (data.y[i], data.m[i], mu[i]);
            ll += match self.family {
                Family::Binomial => {
                    let s = y * m;
                    ln_gamma(m + 1.0) - ln_gamma(s + 1.0) - ln_gamma(m - s + 1.0)
                        + xlogy(s, mu)
                        + xlogy(m - s, 1.0 - mu)
                }
                Family::Poisson => m * (xlogy(y, mu) - mu - ln_gamma(y + 1.0)),
                Family::Gamma => {
                    let nu = m / phi;
                    nu * nu.ln() - nu * mu.ln() - ln_gamma(nu) + (nu - 1.0) * y.ln() - nu * y / mu
                }
            };
        }
        Ok(ll)
    }

    fn score(&self, theta: &[f64]) -> Result<DVector<f64>> {
        let ws = self.workspace(theta)?;
        let data = &self.data;
        let (n, p) = (data.n(), data.p());
        let mut u = DVector::zeros(p + usize::from(self.estimate_phi()));
        for i in 0..n {
            let c = data.m[i] * (data.y[i] - ws.mu[i]) * ws.d[i] / (ws.phi * ws.v[i]);
            for r in 0..p {
                u[r] += c * data.x[(i, r)];
            }
            if self.estimate_phi() {
                let (m, y, mu, phi) = (data.m[i], data.y[i], ws.mu[i], ws.phi);
                let nu = m / phi;
                u[p] -= m / (phi * phi) * (nu.ln() + 1.0 - mu.ln() - digamma(nu) + y.ln() - y / mu);
            }
        }
        Ok(u)
    }

    fn cumulants(&self, theta: &[f64]) -> Result<CumulantSet> {
        Ok(glm_cumulant_set(&self.workspace(theta)?))
    }

    fn fisher_information(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        let ws = self.workspace(theta)?;
        let p = ws.p();
        let d = p + usize::from(ws.estimate_phi);
        let mut info = DMatrix::zeros(d, d);
        info.view_mut((0, 0), (p, p))
            .copy_from(&(weighted_crossprod(&ws.x, &ws.w) / ws.phi));
        if ws.estimate_phi {
            info[(p, p)] = ws.dispersion_sums().0 / (2.0 * ws.phi.powi(4));
        }
        Ok(info)
    }

    fn default_start(&self) -> Result<ParameterPoint> {
        let data = &self.data;
        let n = data.n();
        let ystar = DVector::from_fn(n, |i, _| match self.family {
            Family::Binomial => (data.y[i] * data.m[i] + 0.5) / (data.m[i] + 1.0),
            Family::Poisson => data.y[i] + 0.5,
            Family::Gamma => data.y[i],
        });
        let z = ystar.map(|v| self.link.apply(v).unwrap_or(0.0));
        let beta = least_squares(&data.x, &z)?;
        let mut theta: Vec<f64> = beta.iter().copied().collect();
        if self.estimate_phi() {
            let mu = (&data.x * &beta).map(|e| self.link.inverse(e));
            let dof = (n as f64 - data.p() as f64).max(1.0);
            let pearson: f64 = (0..n)
                .map(|i| data.m[i] * ((data.y[i] - mu[i]) / mu[i]).powi(2))
                .sum::<f64>()
                / dof;
            theta.push(if pearson.is_finite() {
                pearson.max(1e-2)
            } else {
                1.0
            });
        }
        let (p, q) = self.dimensions();
        ParameterPoint::new(theta, p, q)
    }

    fn linear_predictors(&self, theta: &[f64]) -> Option<Vec<f64>> {
        let (beta, _) = self.split(theta);
        let eta = &self.data.x * DVector::from_column_slice(beta);
        Some(eta.iter().copied().collect())
    }
}

fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}
