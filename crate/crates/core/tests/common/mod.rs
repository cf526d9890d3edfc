#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use adjscore_core::betabin::{BetaBinData, BetaBinLinks, BetaBinModel};
use adjscore_core::betareg::{BetaRegData, BetaRegLinks, BetaRegModel};
use adjscore_core::data::{load_betabin, ColumnSpec, Table};
use adjscore_core::links::Link;
use adjscore_core::rng::{draw_beta, draw_betabinomial, stream_rng};
use adjscore_core::special::{ln_gamma, trigamma};
use adjscore_core::{solve, Method, ModelContract, SolverOptions};

pub fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// `|got − want| ≤ tol · max(|want|, floor)`.
pub fn close(got: f64, want: f64, tol: f64, floor: f64) -> bool {
    (got - want).abs() <= tol * want.abs().max(floor)
}

/// Largest entrywise discrepancy between two matrices relative to the larger
/// of their max-norms.
pub fn matrix_rel_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / a.amax().max(b.amax()).max(f64::MIN_POSITIVE)
}

/// `E g(ln Y, ln(1 − Y))` for `Y ~ Beta(μφ, (1 − μ)φ)` by double-exponential
/// quadrature. Halves with a shape below one are integrated after
/// `y = u^{1/a}` (`1 − y = v^{1/b}` on the right), which makes the integrand
/// bounded. Both logarithms are formed without cancellation.
pub fn beta_expectation(mu: f64, phi: f64, g: impl Fn(f64, f64) -> f64) -> f64 {
    let (a, b) = (mu * phi, (1.0 - mu) * phi);
    let ln_beta = ln_gamma(a) + ln_gamma(b) - ln_gamma(phi);
    let h = |ly: f64, l1y: f64| {
        let d = ((a - 1.0) * ly + (b - 1.0) * l1y - ln_beta).exp();
        if d == 0.0 || !d.is_finite() {
            0.0
        } else {
            d * g(ly, l1y)
        }
    };
    let integrate = |f: &dyn Fn(f64) -> f64, hi: f64| {
        quadrature::double_exponential::integrate(f, 0.0, hi, 1e-14).integral
    };
    let left = if a < 1.0 {
        integrate(
            &|u: f64| {
                let y = u.powf(1.0 / a);
                h(u.ln() / a, (-y).ln_1p()) * y / (a * u)
            },
            0.5f64.powf(a),
        )
    } else {
        integrate(&|y: f64| h(y.ln(), (-y).ln_1p()), 0.5)
    };
    let right = if b < 1.0 {
        integrate(
            &|v: f64| {
                let w = v.powf(1.0 / b);
                h((-w).ln_1p(), v.ln() / b) * w / (b * v)
            },
            0.5f64.powf(b),
        )
    } else {
        integrate(&|w: f64| h((-w).ln_1p(), w.ln()), 0.5)
    };
    left + right
}

/// Covariates `[1, x]` with `x` uniform on `(−1, 1)`.
fn two_column_design<R: Rng>(n: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(n, 2, |_, j| {
        if j == 0 {
            1.0
        } else {
            rng.gen_range(-1.0..1.0)
        }
    })
}

pub fn small_betareg(seed: u64, n: usize, links: BetaRegLinks, prec_slope: bool) -> BetaRegModel {
    let mut rng = stream_rng(seed, 0);
    let x = two_column_design(n, &mut rng);
    let z = if prec_slope {
        x.clone()
    } else {
        DMatrix::from_element(n, 1, 1.0)
    };
    let y = DVector::from_fn(n, |i, _| {
        let mu = Link::Logit.inverse(0.3 + 0.9 * x[(i, 1)]);
        draw_beta(mu, 6.0 * (0.4 * x[(i, 1)]).exp(), &mut rng).unwrap()
    });
    BetaRegModel::new(BetaRegData::new(y, x, z).unwrap(), links)
}

pub fn small_betabin(seed: u64, n: usize, m: u64, links: BetaBinLinks) -> BetaBinModel {
    let mut rng = stream_rng(seed, 0);
    let x = two_column_design(n, &mut rng);
    let z = DMatrix::from_element(n, 1, 1.0);
    let y: Vec<u64> = (0..n)
        .map(|i| {
            let mu = Link::Logit.inverse(-0.4 + 1.1 * x[(i, 1)]);
            draw_betabinomial(m, mu, 0.2, &mut rng).unwrap()
        })
        .collect();
    BetaBinModel::new(BetaBinData::new(y, vec![m; n], x, z).unwrap(), links)
}

/// Central differences of `f`.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, theta: &[f64], h: f64) -> Vec<f64> {
    (0..theta.len())
        .map(|k| {
            let mut up = theta.to_vec();
            let mut dn = theta.to_vec();
            let step = h * theta[k].abs().max(1.0);
            up[k] += step;
            dn[k] -= step;
            (f(&up) - f(&dn)) / (2.0 * step)
        })
        .collect()
}

/// Worst relative discrepancy between the analytic score and central
/// differences of the log-likelihood.
pub fn score_fd_error<M: ModelContract + ?Sized>(model: &M, theta: &[f64]) -> f64 {
    let u = model.score(theta).unwrap();
    let fd = fd_gradient(|t| model.log_likelihood(t).unwrap(), theta, 1e-5);
    let scale = u.amax().max(1.0);
    (0..u.len())
        .map(|k| (u[k] - fd[k]).abs() / scale)
        .fold(0.0, f64::max)
}

pub fn score_fd_suite() -> f64 {
    let mut worst = 0.0f64;
    for links in [
        BetaRegLinks::new(Link::Logit, Link::Log).unwrap(),
        BetaRegLinks::new(Link::Probit, Link::Identity).unwrap(),
    ] {
        let model = small_betareg(3, 15, links, links.precision == Link::Log);
        let theta = model.default_start().unwrap().theta;
        worst = worst.max(score_fd_error(&model, &theta));
    }
    for links in [
        BetaBinLinks::new(Link::Logit, Link::Logit).unwrap(),
        BetaBinLinks::new(Link::Probit, Link::Identity).unwrap(),
    ] {
        let model = small_betabin(4, 12, 6, links);
        let theta = model.default_start().unwrap().theta;
        worst = worst.max(score_fd_error(&model, &theta));
    }
    worst
}

/// Per-outcome derivatives of one beta-binomial log-probability written
/// directly as sums over `j`:
/// `(log p, u_μ, u_φ, u_μμ, u_μφ, u_φφ)`.
pub fn betabin_direct(y: u64, m: u64, mu: f64, phi: f64) -> [f64; 6] {
    let q = 1.0 - phi;
    let mut out = [0.0; 6];
    out[0] = ln_gamma(m as f64 + 1.0) - ln_gamma(y as f64 + 1.0) - ln_gamma((m - y) as f64 + 1.0);
    for j in 0..y {
        let j = j as f64;
        let e = q * mu + j * phi;
        out[0] += e.ln();
        out[1] += q / e;
        out[2] += (j - mu) / e;
        out[3] -= q * q / (e * e);
        out[4] += -1.0 / e - q * (j - mu) / (e * e);
        out[5] -= (j - mu).powi(2) / (e * e);
    }
    for j in 0..(m - y) {
        let j = j as f64;
        let f = (1.0 - mu) * q + j * phi;
        out[0] += f.ln();
        out[1] -= q / f;
        out[2] += (j - 1.0 + mu) / f;
        out[3] -= q * q / (f * f);
        out[4] += 1.0 / f + q * (j - 1.0 + mu) / (f * f);
        out[5] -= (j - 1.0 + mu).powi(2) / (f * f);
    }
    for j in 0..m {
        let j = j as f64;
        let g = q + j * phi;
        out[0] -= g.ln();
        out[2] -= (j - 1.0) / g;
        out[5] += (j - 1.0).powi(2) / (g * g);
    }
    out
}

/// Joint enumeration of every outcome vector of a tiny beta-binomial
/// dataset: returns `(info, P, Q)` with `P_s[t,u] = E(U_s U_t U_u)` and
/// `Q_s[t,u] = E(U_s U_tu)`.
pub fn betabin_brute_force(
    m: &[u64],
    x: &DMatrix<f64>,
    z: &DMatrix<f64>,
    links: BetaBinLinks,
    theta: &[f64],
) -> (DMatrix<f64>, Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
    let (n, p, q) = (m.len(), x.ncols(), z.ncols());
    let d = p + q;
    let eta = x * DVector::from_column_slice(&theta[..p]);
    let zeta = z * DVector::from_column_slice(&theta[p..]);
    let mut info = DMatrix::zeros(d, d);
    let mut pm = vec![DMatrix::zeros(d, d); d];
    let mut qm = vec![DMatrix::zeros(d, d); d];
    let mut y = vec![0u64; n];
    loop {
        let mut logp = 0.0;
        let mut u = DVector::zeros(d);
        let mut h = DMatrix::<f64>::zeros(d, d);
        for i in 0..n {
            let mu = links.mean.inverse(eta[i]);
            let phi = links.precision.inverse(zeta[i]);
            let (d1m, d2m) = (links.mean.d1(eta[i]), links.mean.d2(eta[i]));
            let (d1p, d2p) = (links.precision.d1(zeta[i]), links.precision.d2(zeta[i]));
            let r = betabin_direct(y[i], m[i], mu, phi);
            logp += r[0];
            let mut g = DVector::zeros(d);
            for t in 0..p {
                g[t] = x[(i, t)];
            }
            for t in 0..q {
                g[p + t] = z[(i, t)];
            }
            let a = r[1] * d1m;
            let b = r[2] * d1p;
            let haa = r[3] * d1m * d1m + r[1] * d2m;
            let hab = r[4] * d1m * d1p;
            let hbb = r[5] * d1p * d1p + r[2] * d2p;
            for s in 0..d {
                let sa = s < p;
                u[s] += g[s] * if sa { a } else { b };
                for t in 0..d {
                    let ta = t < p;
                    let c = match (sa, ta) {
                        (true, true) => haa,
                        (false, false) => hbb,
                        _ => hab,
                    };
                    h[(s, t)] += g[s] * g[t] * c;
                }
            }
        }
        let prob = logp.exp();
        info += prob * &u * u.transpose();
        for s in 0..d {
            for t in 0..d {
                for v in 0..d {
                    pm[s][(t, v)] += prob * u[s] * u[t] * u[v];
                    qm[s][(t, v)] += prob * u[s] * h[(t, v)];
                }
            }
        }
        let mut k = 0;
        loop {
            if k == n {
                return (info, pm, qm);
            }
            if y[k] < m[k] {
                y[k] += 1;
                break;
            }
            y[k] = 0;
            k += 1;
        }
    }
}

pub fn brute_force_suite() -> f64 {
    let x = DMatrix::from_row_slice(3, 2, &[1.0, -0.6, 1.0, 0.2, 1.0, 0.9]);
    let z = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, 1.0, -0.3, 1.0, 0.1]);
    let m = [2u64, 3, 2];
    let mut worst = 0.0f64;
    for (links, theta) in [
        (
            BetaBinLinks::new(Link::Logit, Link::Logit).unwrap(),
            [0.3, -0.8, -1.2, 0.4],
        ),
        (
            BetaBinLinks::new(Link::Probit, Link::Logit).unwrap(),
            [-0.2, 0.5, -0.7, -0.6],
        ),
        (
            BetaBinLinks::new(Link::Logit, Link::Identity).unwrap(),
            [0.1, 1.1, 0.3, 0.05],
        ),
    ] {
        let model = BetaBinModel::new(
            BetaBinData::new(vec![0; 3], m.to_vec(), x.clone(), z.clone()).unwrap(),
            links,
        );
        let set = model.cumulants(&theta).unwrap();
        let (info, pm, qm) = betabin_brute_force(&m, &x, &z, links, &theta);
        worst = worst.max(matrix_rel_error(&set.info, &info));
        for s in 0..4 {
            worst = worst.max(matrix_rel_error(&set.p[s], &pm[s]));
            worst = worst.max(matrix_rel_error(&set.q[s], &qm[s]));
        }
    }
    worst
}

/// Median-BR fits under the two precision links of each model, compared on
/// the `(β, φ)` scale. Returns the worst relative discrepancy.
pub fn link_swap_invariance() -> f64 {
    let median = SolverOptions::for_method(Method::MedianBr);
    let mut worst = 0.0f64;

    let log_model = small_betareg(
        21,
        25,
        BetaRegLinks::new(Link::Logit, Link::Log).unwrap(),
        false,
    );
    let id_model = BetaRegModel::new(
        log_model.data.clone(),
        BetaRegLinks::new(Link::Logit, Link::Identity).unwrap(),
    );
    let a = solve(&log_model, &median).unwrap();
    let b = solve(&id_model, &median).unwrap();
    assert!(a.converged && b.converged);
    let ta = &a.estimate.theta;
    let tb = &b.estimate.theta;
    for k in 0..2 {
        worst = worst.max((ta[k] - tb[k]).abs() / tb[k].abs().max(1.0));
    }
    worst = worst.max((ta[2].exp() - tb[2]).abs() / tb[2].abs());

    let logit_model = small_betabin(
        22,
        30,
        8,
        BetaBinLinks::new(Link::Logit, Link::Logit).unwrap(),
    );
    let id_model = BetaBinModel::new(
        logit_model.data.clone(),
        BetaBinLinks::new(Link::Logit, Link::Identity).unwrap(),
    );
    let a = solve(&logit_model, &median).unwrap();
    let b = solve(&id_model, &median).unwrap();
    assert!(a.converged && b.converged);
    let ta = &a.estimate.theta;
    let tb = &b.estimate.theta;
    for k in 0..2 {
        worst = worst.max((ta[k] - tb[k]).abs() / tb[k].abs().max(1.0));
    }
    worst = worst.max((Link::Logit.inverse(ta[2]) - tb[2]).abs() / tb[2].abs());
    worst
}

/// Beta regression single-observation derivatives on the `(μ, φ)` scale,
/// given `ln y` and `ln(1 − y)`: `(u_μ, u_φ, u_μμ, u_μφ, u_φφ)`.
pub fn betareg_direct(ly: f64, l1y: f64, mu: f64, phi: f64) -> [f64; 5] {
    use adjscore_core::special::digamma;
    let (a, b) = (mu * phi, (1.0 - mu) * phi);
    let ystar = ly - l1y;
    let mustar = digamma(a) - digamma(b);
    let u_mu = phi * (ystar - mustar);
    let u_phi = mu * (ystar - mustar) + l1y - digamma(b) + digamma(phi);
    let u_mumu = -phi * phi * (trigamma(a) + trigamma(b));
    let u_muphi = (ystar - mustar) - phi * (mu * trigamma(a) - (1.0 - mu) * trigamma(b));
    let u_phiphi = -mu * mu * trigamma(a) - (1.0 - mu).powi(2) * trigamma(b) + trigamma(phi);
    [u_mu, u_phi, u_mumu, u_muphi, u_phiphi]
}

pub const RATS_ENV: &str = "ADJSCORE_RATS_CSV";

/// The low-iron rat teratology table, from `$ADJSCORE_RATS_CSV` or
/// `fixtures/rats.csv` at the workspace root.
pub fn rats_path() -> Option<PathBuf> {
    if let Ok(p) = std::env::var(RATS_ENV) {
        let p = PathBuf::from(p);
        return p.exists().then_some(p);
    }
    let p = workspace_root().join("fixtures/rats.csv");
    p.exists().then_some(p)
}

pub fn rats_spec(max_trials: Option<u64>) -> ColumnSpec {
    ColumnSpec {
        response: "y".into(),
        trials: Some("m".into()),
        mean_cols: vec!["x1".into(), "x2".into(), "x3".into(), "x4".into()],
        prec_cols: vec![],
        mean_intercept: true,
        prec_intercept: true,
        max_trials,
    }
}

pub fn rats_model(max_trials: Option<u64>) -> Option<BetaBinModel> {
    let table = Table::read(rats_path()?).ok()?;
    let (data, _) = load_betabin(&table, &rats_spec(max_trials)).ok()?;
    Some(BetaBinModel::new(
        data,
        BetaBinLinks::new(Link::Logit, Link::Identity).unwrap(),
    ))
}
