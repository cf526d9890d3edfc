//! Embedded oracle checks, runnable from the command line.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::betabin::{betabin_derivatives, betabin_logpmf};
use crate::betareg::{betareg_logdensity, BetaRegData, BetaRegLinks, BetaRegModel};
use crate::engine::{
    compute_adjustments, index_notation_oracle, solve, AdjustmentBundle, CumulantTensor, Method,
    ModelContract, SolverOptions,
};
use crate::error::Result;
use crate::glm::{glm_closed_form_adjustments, glm_cumulant_set, Family, GlmData, GlmWorkspace};
use crate::links::Link;
use crate::rng::{draw_beta, draw_normal, stream_rng};
use crate::special::digamma;

const SEED: u64 = 0x5e1f_7e57;

#[derive(Debug, Clone)]
pub struct GroupOutcome {
    pub name: &'static str,
    pub checks: usize,
    /// Largest error relative to the group's tolerance; at most 1 on success.
    pub worst_ratio: f64,
    pub failure: Option<String>,
}

impl GroupOutcome {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

struct Tally {
    name: &'static str,
    checks: usize,
    worst: f64,
    failure: Option<String>,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Tally {
            name,
            checks: 0,
            worst: 0.0,
            failure: None,
        }
    }

    /// Records `|got − want| ≤ tol · scale`.
    fn check(&mut self, label: impl FnOnce() -> String, got: f64, want: f64, tol: f64, scale: f64) {
        self.checks += 1;
        let ratio = (got - want).abs() / (tol * scale);
        if !(ratio <= 1.0) && self.failure.is_none() {
            self.failure = Some(format!("{}: got {got:e}, expected {want:e}", label()));
        }
        if ratio.is_nan() {
            self.worst = f64::INFINITY;
        } else {
            self.worst = self.worst.max(ratio);
        }
    }

    fn error(&mut self, label: &str, e: crate::Error) {
        self.checks += 1;
        self.worst = f64::INFINITY;
        if self.failure.is_none() {
            self.failure = Some(format!("{label}: {e}"));
        }
    }

    fn finish(self) -> GroupOutcome {
        GroupOutcome {
            name: self.name,
            checks: self.checks,
            worst_ratio: self.worst,
            failure: self.failure,
        }
    }
}

/// Componentwise relative comparison with a floor at `1e-8` of the largest
/// magnitude, so that entries which cancel to nearly zero are not judged on
/// rounding noise alone.
fn vector_scale(want: &DVector<f64>, r: usize) -> f64 {
    want[r].abs().max(1e-8 * want.amax()).max(f64::MIN_POSITIVE)
}

/// Random positive definite information with symmetric third-order arrays:
/// `ν_{s,t,u}` fully symmetric and `ν_{s,tu}` symmetric in its last pair.
pub fn random_tensor<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CumulantTensor {
    let a = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
    let info = &a * a.transpose() + DMatrix::identity(d, d) * (0.5 + rng.gen_range(0.0..1.0));
    let raw3: Vec<f64> = (0..d * d * d).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let raw21: Vec<f64> = (0..d * d * d).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let at = |v: &[f64], s: usize, t: usize, u: usize| v[(s * d + t) * d + u];
    let mut nu3 = vec![0.0; d * d * d];
    let mut nu21 = vec![0.0; d * d * d];
    for s in 0..d {
        for t in 0..d {
            for u in 0..d {
                nu3[(s * d + t) * d + u] = (at(&raw3, s, t, u)
                    + at(&raw3, s, u, t)
                    + at(&raw3, t, s, u)
                    + at(&raw3, t, u, s)
                    + at(&raw3, u, s, t)
                    + at(&raw3, u, t, s))
                    / 6.0;
                nu21[(s * d + t) * d + u] = 0.5 * (at(&raw21, s, t, u) + at(&raw21, s, u, t));
            }
        }
    }
    CumulantTensor::new(info, nu3, nu21).expect("sizes are consistent")
}

/// Checks `Ã = A* − i F̃₂` on a computed bundle.
fn check_remark(t: &mut Tally, label: &str, b: &AdjustmentBundle, info: &DMatrix<f64>) {
    let rhs = b.median_from_mean(info);
    for r in 0..rhs.len() {
        let scale = vector_scale(&rhs, r);
        t.check(
            || format!("{label} component {r}"),
            b.median_adj[r],
            rhs[r],
            1e-12,
            scale,
        );
    }
}

fn random_tensors() -> Vec<CumulantTensor> {
    let mut rng = stream_rng(SEED, 1);
    (0..240)
        .map(|k| random_tensor(2 + k % 3, &mut rng))
        .collect()
}

/// Matrix-form median adjustment against the index-notation oracle.
pub fn engine_equivalence() -> GroupOutcome {
    let mut t = Tally::new("engine-equivalence");
    for (k, tensor) in random_tensors().iter().enumerate() {
        let bundle = match compute_adjustments(&tensor.to_cumulant_set()) {
            Ok(b) => b,
            Err(e) => {
                t.error(&format!("tensor {k}"), e);
                continue;
            }
        };
        match index_notation_oracle(tensor) {
            Ok(oracle) => {
                for r in 0..oracle.len() {
                    let scale = vector_scale(&oracle, r);
                    t.check(
                        || format!("tensor {k} component {r}"),
                        bundle.m1[r],
                        oracle[r],
                        1e-10,
                        scale,
                    );
                }
            }
            Err(e) => t.error(&format!("tensor {k}"), e),
        }
    }
    t.finish()
}

fn small_betareg_model() -> Result<BetaRegModel> {
    let mut rng = stream_rng(SEED, 2);
    let n = 30;
    let x = DMatrix::from_fn(n, 2, |_, j| if j == 0 { 1.0 } else { 0.0 });
    let mut x = x;
    for i in 0..n {
        x[(i, 1)] = draw_normal(&mut rng);
    }
    let z = x.columns(0, 1).into_owned();
    let mut y = DVector::zeros(n);
    for i in 0..n {
        let mu = Link::Logit.inverse(0.5 + 0.8 * x[(i, 1)]);
        y[i] = draw_beta(mu, 8.0, &mut rng)?;
    }
    Ok(BetaRegModel::new(
        BetaRegData::new(y, x, z)?,
        BetaRegLinks::default(),
    ))
}

/// `Ã = A* − i F̃₂` on random bundles and along solver iterates.
pub fn remark_identity() -> GroupOutcome {
    let mut t = Tally::new("median-mean-identity");
    for (k, tensor) in random_tensors().iter().enumerate() {
        match compute_adjustments(&tensor.to_cumulant_set()) {
            Ok(b) => check_remark(&mut t, &format!("tensor {k}"), &b, &tensor.info),
            Err(e) => t.error(&format!("tensor {k}"), e),
        }
    }
    let model = match small_betareg_model() {
        Ok(m) => m,
        Err(e) => {
            t.error("beta regression sample", e);
            return t.finish();
        }
    };
    for method in Method::ALL {
        let fit = match solve(&model, &SolverOptions::for_method(method)) {
            Ok(f) => f,
            Err(e) => {
                t.error(&format!("{method} fit"), e);
                continue;
            }
        };
        for (j, entry) in fit.trace.iter().enumerate() {
            let label = format!("{method} iterate {j}");
            let bundle = model
                .cumulants(&entry.theta)
                .and_then(|c| compute_adjustments(&c).map(|b| (b, c.info)));
            match bundle {
                Ok((b, info)) => check_remark(&mut t, &label, &b, &info),
                Err(e) => t.error(&label, e),
            }
        }
    }
    t.finish()
}

/// Generic engine against the closed-form GLM adjustments.
pub fn glm_closed_form() -> GroupOutcome {
    let mut t = Tally::new("glm-closed-form");
    let mut rng = stream_rng(SEED, 3);
    let compare = |t: &mut Tally, label: String, ws: &GlmWorkspace| {
        let bundle = match compute_adjustments(&glm_cumulant_set(ws)) {
            Ok(b) => b,
            Err(e) => return t.error(&label, e),
        };
        for (method, engine) in [
            (Method::MeanBr, &bundle.mean_adj),
            (Method::MedianBr, &bundle.median_adj),
        ] {
            let (beta_adj, phi_adj) = match glm_closed_form_adjustments(ws, method) {
                Ok(v) => v,
                Err(e) => return t.error(&label, e),
            };
            let mut closed: Vec<f64> = beta_adj.iter().copied().collect();
            closed.extend(phi_adj);
            let closed = DVector::from_vec(closed);
            for r in 0..closed.len() {
                let scale = vector_scale(&closed, r);
                t.check(
                    || format!("{label} {method} component {r}"),
                    engine[r],
                    closed[r],
                    1e-10,
                    scale,
                );
            }
        }
    };
    for k in 0..50 {
        let n = rng.gen_range(6..=25);
        let p = rng.gen_range(1..=4);
        let x = DMatrix::from_fn(n, p, |_, j| {
            if j == 0 {
                1.0
            } else {
                rng.gen_range(-1.5..1.5)
            }
        });
        let trials: Vec<f64> = (0..n).map(|_| rng.gen_range(1..=12) as f64).collect();
        let succ: Vec<f64> = trials
            .iter()
            .map(|&m| rng.gen_range(0..=m as u32) as f64)
            .collect();
        let beta: Vec<f64> = (0..p).map(|_| rng.gen_range(-0.8..0.8)).collect();
        let ws = GlmData::binomial(x, &succ, &trials)
            .and_then(|d| GlmWorkspace::new(&d, Family::Binomial, Link::Logit, &beta, 1.0, false));
        match ws {
            Ok(ws) => compare(&mut t, format!("binomial design {k}"), &ws),
            Err(e) => t.error(&format!("binomial design {k}"), e),
        }
    }
    for k in 0..20 {
        let n = rng.gen_range(6..=25);
        let p = rng.gen_range(1..=4);
        let x = DMatrix::from_fn(n, p, |_, j| {
            if j == 0 {
                1.0
            } else {
                rng.gen_range(-1.0..1.0)
            }
        });
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..4.0)).collect();
        let beta: Vec<f64> = (0..p).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let phi = rng.gen_range(0.1..2.0);
        let ws = GlmData::new(x, &y, None)
            .and_then(|d| GlmWorkspace::new(&d, Family::Gamma, Link::Log, &beta, phi, true));
        match ws {
            Ok(ws) => compare(&mut t, format!("gamma design {k}"), &ws),
            Err(e) => t.error(&format!("gamma design {k}"), e),
        }
    }
    t.finish()
}

const PARAMS: [(f64, f64); 5] = [
    (0.5, 0.3),
    (0.12, 0.05),
    (0.8, 0.6),
    (0.35, 0.9),
    (0.97, 0.2),
];

/// Beta-binomial probabilities sum to one; beta densities integrate to one.
pub fn normalization() -> GroupOutcome {
    let mut t = Tally::new("normalization");
    for m in [1u64, 2, 7, 17, 60] {
        for (mu, phi) in PARAMS {
            let mut total = 0.0;
            for y in 0..=m {
                match betabin_logpmf(y, m, mu, phi) {
                    Ok(lp) => total += lp.exp(),
                    Err(e) => return fail(t, e),
                }
            }
            t.check(
                || format!("beta-binomial m={m} mu={mu} phi={phi}"),
                total,
                1.0,
                1e-12,
                1.0,
            );
        }
    }
    for (mu, phi) in [(0.5, 2.0), (0.2, 15.0), (0.9, 40.0), (0.4, 1.5), (0.7, 6.0)] {
        let total = beta_expectation(mu, phi, |_| 1.0);
        t.check(|| format!("beta mu={mu} phi={phi}"), total, 1.0, 1e-10, 1.0);
    }
    t.finish()
}

/// `E g(Y)` for a beta variable. When a shape parameter is below one, the
/// corresponding half of the unit interval is mapped through `y = u^{1/a}`
/// (or `1 − y = v^{1/b}`) to remove the power singularity of the density.
fn beta_expectation(mu: f64, phi: f64, g: impl Fn(f64) -> f64) -> f64 {
    let (a, b) = (mu * phi, (1.0 - mu) * phi);
    let h = |y: f64| {
        let d = betareg_logdensity(y, mu, phi).map(f64::exp).unwrap_or(0.0);
        if d == 0.0 {
            0.0
        } else {
            d * g(y)
        }
    };
    let integrate = |f: &dyn Fn(f64) -> f64, hi: f64| {
        quadrature::double_exponential::integrate(f, 0.0, hi, 1e-14).integral
    };
    let left = if a < 1.0 {
        integrate(
            &|u: f64| h(u.powf(1.0 / a)) * u.powf(1.0 / a - 1.0) / a,
            0.5f64.powf(a),
        )
    } else {
        integrate(&h, 0.5)
    };
    let right = if b < 1.0 {
        integrate(
            &|v: f64| h(1.0 - v.powf(1.0 / b)) * v.powf(1.0 / b - 1.0) / b,
            0.5f64.powf(b),
        )
    } else {
        integrate(&|w: f64| h(1.0 - w), 0.5)
    };
    left + right
}

fn fail(mut t: Tally, e: crate::Error) -> GroupOutcome {
    t.error("evaluation", e);
    t.finish()
}

/// First and second Bartlett identities for one observation, by exhaustive
/// summation (beta-binomial) and quadrature (beta).
pub fn bartlett() -> GroupOutcome {
    let mut t = Tally::new("bartlett-identities");
    for m in [1u64, 5, 13] {
        for (mu, phi) in PARAMS {
            let mut e = [0.0f64; 8];
            for y in 0..=m {
                let (p, d) = match (
                    betabin_logpmf(y, m, mu, phi),
                    betabin_derivatives(y, m, mu, phi),
                ) {
                    (Ok(lp), Ok(d)) => (lp.exp(), d),
                    (Err(err), _) | (_, Err(err)) => return fail(t, err),
                };
                e[0] += p * d.u_mu;
                e[1] += p * d.u_phi;
                e[2] += p * d.u_mu * d.u_mu;
                e[3] += p * d.u_mumu;
                e[4] += p * d.u_mu * d.u_phi;
                e[5] += p * d.u_muphi;
                e[6] += p * d.u_phi * d.u_phi;
                e[7] += p * d.u_phiphi;
            }
            let label = |what: &'static str| {
                move || format!("beta-binomial m={m} mu={mu} phi={phi}: {what}")
            };
            t.check(label("E[U_mu]"), e[0], 0.0, 1e-10, e[2].sqrt().max(1.0));
            t.check(label("E[U_phi]"), e[1], 0.0, 1e-10, e[6].sqrt().max(1.0));
            t.check(label("mu,mu"), e[2], -e[3], 1e-10, e[2].abs().max(1.0));
            t.check(
                label("mu,phi"),
                e[4],
                -e[5],
                1e-10,
                e[2].abs().max(e[6].abs()).max(1.0),
            );
            t.check(label("phi,phi"), e[6], -e[7], 1e-10, e[6].abs().max(1.0));
        }
    }
    for (mu, phi) in [(0.5, 3.0), (0.3, 12.0), (0.85, 25.0)] {
        let (a, b) = (mu * phi, (1.0 - mu) * phi);
        let mu_star = digamma(a) - digamma(b);
        let s_star = digamma(b) - digamma(phi);
        let integrate = |f: &dyn Fn(f64) -> f64| beta_expectation(mu, phi, f);
        let u_mu = |y: f64| phi * ((y / (1.0 - y)).ln() - mu_star);
        let u_phi = |y: f64| mu * ((y / (1.0 - y)).ln() - mu_star) + (1.0 - y).ln() - s_star;
        let psi1 = |v: f64| crate::special::trigamma(v);
        let i_mumu = phi * phi * (psi1(a) + psi1(b));
        let e_mu = integrate(&u_mu);
        let e_phi = integrate(&u_phi);
        let e_mumu = integrate(&|y| u_mu(y) * u_mu(y));
        let label = |what: &'static str| move || format!("beta mu={mu} phi={phi}: {what}");
        t.check(label("E[U_mu]"), e_mu, 0.0, 1e-10, i_mumu.sqrt());
        t.check(label("E[U_phi]"), e_phi, 0.0, 1e-10, 1.0);
        t.check(label("E[U_mu^2]"), e_mumu, i_mumu, 1e-10, i_mumu);
    }
    t.finish()
}

pub fn run_all() -> Vec<GroupOutcome> {
    vec![
        engine_equivalence(),
        remark_identity(),
        glm_closed_form(),
        normalization(),
        bartlett(),
    ]
}
