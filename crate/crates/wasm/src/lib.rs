//! Browser bindings: a one-parameter binomial fit under the three methods,
//! the beta-binomial probability function and the beta density.
//!
//! Each exported function wraps a plain Rust function of the same name with
//! an `_impl` suffix, which is what the native tests call.

use nalgebra::DMatrix;
use wasm_bindgen::prelude::*;

use adjscore_core::betabin::betabin_logpmf;
use adjscore_core::betareg::betareg_logdensity;
use adjscore_core::glm::{Dispersion, Family, GlmData, GlmModel};
use adjscore_core::links::Link;
use adjscore_core::{solve, Method, Result, SolverOptions};

fn to_js<T>(r: Result<T>) -> std::result::Result<T, JsValue> {
    r.map_err(|e| JsValue::from_str(&e.to_string()))
}

/// Logit-scale estimates and standard errors of a binomial probability from
/// `y` successes in `m` trials, as `[ml, se, mean-br, se, median-br, se]`.
/// ML is infinite when `y` is 0 or `m`; those entries are then `±∞`.
pub fn binomial_logit_estimates_impl(y: u32, m: u32) -> Result<Vec<f64>> {
    let x = DMatrix::from_element(1, 1, 1.0);
    let data = GlmData::binomial(x, &[f64::from(y)], &[f64::from(m)])?;
    let model = GlmModel::new(data, Family::Binomial, Link::Logit, Dispersion::Fixed(1.0))?;
    let mut out = Vec::with_capacity(6);
    for method in [Method::Ml, Method::MeanBr, Method::MedianBr] {
        if method == Method::Ml && (y == 0 || y == m) {
            let inf = if y == 0 {
                f64::NEG_INFINITY
            } else {
                f64::INFINITY
            };
            out.extend([inf, f64::INFINITY]);
            continue;
        }
        let fit = solve(&model, &SolverOptions::for_method(method))?;
        out.extend([fit.estimate.theta[0], fit.std_errors[0]]);
    }
    Ok(out)
}

#[wasm_bindgen]
pub fn binomial_logit_estimates(y: u32, m: u32) -> std::result::Result<Vec<f64>, JsValue> {
    to_js(binomial_logit_estimates_impl(y, m))
}

/// `P(Y = y)` for `y = 0..=m` with mean `mu` and intra-cluster correlation `phi`.
pub fn betabinomial_pmf_impl(m: u32, mu: f64, phi: f64) -> Result<Vec<f64>> {
    let m = u64::from(m);
    (0..=m)
        .map(|y| betabin_logpmf(y, m, mu, phi).map(f64::exp))
        .collect()
}

#[wasm_bindgen]
pub fn betabinomial_pmf(m: u32, mu: f64, phi: f64) -> std::result::Result<Vec<f64>, JsValue> {
    to_js(betabinomial_pmf_impl(m, mu, phi))
}

/// Beta density with mean `mu` and precision `phi` at `points` interior
/// grid values `(k + 1/2)/points`.
pub fn beta_density_curve_impl(mu: f64, phi: f64, points: u32) -> Result<Vec<f64>> {
    let n = f64::from(points.max(1));
    (0..points.max(1))
        .map(|k| betareg_logdensity((f64::from(k) + 0.5) / n, mu, phi).map(f64::exp))
        .collect()
}

#[wasm_bindgen]
pub fn beta_density_curve(
    mu: f64,
    phi: f64,
    points: u32,
) -> std::result::Result<Vec<f64>, JsValue> {
    to_js(beta_density_curve_impl(mu, phi, points))
}
