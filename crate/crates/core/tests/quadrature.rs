mod common;

use nalgebra::{DMatrix, DVector};

use adjscore_core::betareg::{BetaRegData, BetaRegLinks, BetaRegModel};
use adjscore_core::glm::{Dispersion, Family, GlmData, GlmModel};
use adjscore_core::links::Link;
use adjscore_core::special::{digamma, ln_gamma};
use adjscore_core::ModelContract;

use common::*;

struct Obs {
    x: Vec<f64>,
    z: Vec<f64>,
}

/// Per-observation score vector and Hessian on the θ scale, from the
/// `(μ, φ)`-scale derivatives and the link derivatives.
fn theta_derivatives(
    o: &Obs,
    links: BetaRegLinks,
    theta: &[f64],
    ly: f64,
    l1y: f64,
) -> (Vec<f64>, DMatrix<f64>) {
    let (p, q) = (o.x.len(), o.z.len());
    let eta: f64 = o.x.iter().zip(theta).map(|(a, b)| a * b).sum();
    let zeta: f64 = o.z.iter().zip(&theta[p..]).map(|(a, b)| a * b).sum();
    let (mu, phi) = (links.mean.inverse(eta), links.precision.inverse(zeta));
    let (m1, m2) = (links.mean.d1(eta), links.mean.d2(eta));
    let (f1, f2) = (links.precision.d1(zeta), links.precision.d2(zeta));
    let [u_mu, u_phi, u_mumu, u_muphi, u_phiphi] = betareg_direct(ly, l1y, mu, phi);
    let cov: Vec<f64> = o.x.iter().chain(&o.z).copied().collect();
    let d = p + q;
    let mut u = vec![0.0; d];
    let mut h = DMatrix::zeros(d, d);
    for s in 0..d {
        u[s] = if s < p { u_mu * m1 } else { u_phi * f1 } * cov[s];
        for t in 0..d {
            let c = match (s < p, t < p) {
                (true, true) => u_mumu * m1 * m1 + u_mu * m2,
                (false, false) => u_phiphi * f1 * f1 + u_phi * f2,
                _ => u_muphi * m1 * f1,
            };
            h[(s, t)] = c * cov[s] * cov[t];
        }
    }
    (u, h)
}

fn check_betareg(links: BetaRegLinks, theta: &[f64], obs: &[Obs]) {
    let (p, q) = (obs[0].x.len(), obs[0].z.len());
    let d = p + q;
    let n = obs.len();
    let x = DMatrix::from_fn(n, p, |i, j| obs[i].x[j]);
    let z = DMatrix::from_fn(n, q, |i, j| obs[i].z[j]);
    let model = BetaRegModel::new(
        BetaRegData::new(DVector::from_element(n, 0.5), x, z).unwrap(),
        links,
    );
    let set = model.cumulants(theta).unwrap();

    let mut info = DMatrix::zeros(d, d);
    let mut pm = vec![DMatrix::zeros(d, d); d];
    let mut qm = vec![DMatrix::zeros(d, d); d];
    for o in obs {
        let eta: f64 = o.x.iter().zip(theta).map(|(a, b)| a * b).sum();
        let zeta: f64 = o.z.iter().zip(&theta[p..]).map(|(a, b)| a * b).sum();
        let (mu, phi) = (links.mean.inverse(eta), links.precision.inverse(zeta));
        let ev = |g: &dyn Fn(&[f64], &DMatrix<f64>) -> f64| {
            beta_expectation(mu, phi, |ly, l1y| {
                let (u, h) = theta_derivatives(o, links, theta, ly, l1y);
                g(&u, &h)
            })
        };
        for s in 0..d {
            let m0 = ev(&|u, _| u[s]);
            assert!(m0.abs() < 1e-8, "score mean {m0}");
            for t in 0..d {
                info[(s, t)] += ev(&|u, _| u[s] * u[t]);
                let neg_h = -ev(&|_, h| h[(s, t)]);
                let uu = ev(&|u, _| u[s] * u[t]);
                assert!(close(neg_h, uu, 1e-8, 1e-8), "{s}{t}: {neg_h} vs {uu}");
                for r in 0..d {
                    pm[s][(t, r)] += ev(&|u, _| u[s] * u[t] * u[r]);
                    qm[s][(t, r)] += ev(&|u, h| u[s] * h[(t, r)]);
                }
            }
        }
    }
    let e = matrix_rel_error(&set.info, &info);
    assert!(e < 1e-8, "information {e:e}");
    for s in 0..d {
        let ep = matrix_rel_error(&set.p[s], &pm[s]);
        let eq = matrix_rel_error(&set.q[s], &qm[s]);
        assert!(ep < 1e-7 && eq < 1e-7, "s={s}: P {ep:e}, Q {eq:e}");
    }
}

#[test]
fn betareg_cumulants_match_quadrature_logit_log() {
    let obs = vec![
        Obs {
            x: vec![1.0, -0.7],
            z: vec![1.0, 0.3],
        },
        Obs {
            x: vec![1.0, 0.4],
            z: vec![1.0, -0.5],
        },
        Obs {
            x: vec![1.0, 1.2],
            z: vec![1.0, 0.9],
        },
    ];
    let links = BetaRegLinks::new(Link::Logit, Link::Log).unwrap();
    check_betareg(links, &[0.2, 0.8, 1.6, 0.4], &obs);
}

#[test]
fn betareg_cumulants_match_quadrature_small_shapes() {
    // Precisions near 1.5 put both shape parameters below one.
    let obs = vec![
        Obs {
            x: vec![1.0, 0.2],
            z: vec![1.0],
        },
        Obs {
            x: vec![1.0, -0.9],
            z: vec![1.0],
        },
    ];
    let links = BetaRegLinks::new(Link::Probit, Link::Identity).unwrap();
    check_betareg(links, &[0.1, 0.5, 1.5], &obs);
}

fn gamma_logdensity(y: f64, mu: f64, k: f64) -> f64 {
    k * (k * y / mu).ln() - k * y / mu - y.ln() - ln_gamma(k)
}

fn gamma_expectation(mu: f64, k: f64, g: impl Fn(f64) -> f64) -> f64 {
    let hi = mu * (1.0 + 60.0 / k.sqrt() + 60.0 / k);
    let f = |y: f64| {
        if y <= 0.0 {
            0.0
        } else {
            gamma_logdensity(y, mu, k).exp() * g(y)
        }
    };
    quadrature::double_exponential::integrate(f, 0.0, hi, 1e-14).integral
}

#[test]
fn gamma_glm_information_matches_quadrature() {
    let x = DMatrix::from_row_slice(4, 2, &[1.0, -1.0, 1.0, 0.0, 1.0, 0.5, 1.0, 1.5]);
    let weights = [1.0, 2.0, 1.5, 3.0];
    let data = GlmData::new(x.clone(), &[1.0, 2.0, 3.0, 4.0], Some(&weights)).unwrap();
    let model = GlmModel::new(data, Family::Gamma, Link::Log, Dispersion::Estimated).unwrap();
    let theta = [0.3, 0.4, 0.5];
    let phi = theta[2];
    let info = model.fisher_information(&theta).unwrap();

    let mut want = DMatrix::zeros(3, 3);
    for i in 0..4 {
        let mu = (theta[0] * x[(i, 0)] + theta[1] * x[(i, 1)]).exp();
        let k = weights[i] / phi;
        let dk = -weights[i] / (phi * phi);
        // Derivatives of the log density in η and φ.
        let u = |y: f64| {
            let u_eta = k * (y / mu - 1.0);
            let u_phi = dk * ((k * y / mu).ln() + 1.0 - y / mu - digamma(k));
            [u_eta * x[(i, 0)], u_eta * x[(i, 1)], u_phi]
        };
        for s in 0..3 {
            assert!(gamma_expectation(mu, k, |y| u(y)[s]).abs() < 1e-9);
            for t in 0..3 {
                want[(s, t)] += gamma_expectation(mu, k, |y| u(y)[s] * u(y)[t]);
            }
        }
    }
    let e = matrix_rel_error(&info, &want);
    assert!(e < 1e-8, "{e:e}\n{info}\n{want}");
}
