//! Deterministic random streams and the samplers used by the simulations.
//!
//! Each replication owns a ChaCha20 stream selected by `(seed, replication)`;
//! the block counter inside the stream indexes the draws. Results therefore
//! do not depend on how replications are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Stream reserved for quantities shared by all replications, such as
/// generated covariates.
pub const DESIGN_STREAM: u64 = u64::MAX;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn replication_rng(seed: u64, replication: u64) -> ChaCha20Rng {
    stream_rng(seed, replication)
}

pub fn draw_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Uniform on the open interval `(0, 1)`.
pub fn draw_open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            return u;
        }
    }
}

/// Gamma variate with unit scale (Marsaglia and Tsang). Shapes below one use
/// `G(a) = G(a + 1) U^{1/a}`.
pub fn draw_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> Result<f64> {
    if !(shape > 0.0 && shape.is_finite()) {
        return Err(Error::domain(format!(
            "gamma shape {shape} is not positive"
        )));
    }
    if shape < 1.0 {
        let g = draw_gamma(shape + 1.0, rng)?;
        let u = draw_open_unit(rng);
        return Ok(g * (u.ln() / shape).exp());
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let (x, v) = loop {
            let x = draw_normal(rng);
            let v = 1.0 + c * x;
            if v > 0.0 {
                break (x, v * v * v);
            }
        };
        let u = draw_open_unit(rng);
        if u < 1.0 - 0.0331 * x.powi(4) {
            return Ok(d * v);
        }
        if u.ln() < 0.5 * x * x + d * (1.0 - v + v.ln()) {
            return Ok(d * v);
        }
    }
}

/// Beta variate with mean `μ` and precision `φ`, drawn as `G₁/(G₁+G₂)`.
/// Draws that round to 0 or 1 are rejected and redrawn.
pub fn draw_beta<R: Rng + ?Sized>(mu: f64, phi: f64, rng: &mut R) -> Result<f64> {
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::domain(format!("beta mean {mu} outside (0,1)")));
    }
    if !(phi > 0.0 && phi.is_finite()) {
        return Err(Error::domain(format!(
            "beta precision {phi} is not positive"
        )));
    }
    loop {
        let g1 = draw_gamma(phi * mu, rng)?;
        let g2 = draw_gamma(phi * (1.0 - mu), rng)?;
        let y = g1 / (g1 + g2);
        if y > 0.0 && y < 1.0 {
            return Ok(y);
        }
    }
}

/// Beta-binomial variate: `π ~ Beta` with mean `μ` and `Var(π) = μ(1−μ)φ`,
/// then `Binomial(m, π)`.
pub fn draw_betabinomial<R: Rng + ?Sized>(m: u64, mu: f64, phi: f64, rng: &mut R) -> Result<u64> {
    if !(phi > 0.0 && phi < 1.0) {
        return Err(Error::domain(format!(
            "beta-binomial dispersion {phi} outside (0,1)"
        )));
    }
    let pi = draw_beta(mu, (1.0 - phi) / phi, rng)?;
    let binom = Binomial::new(m, pi).map_err(|e| Error::domain(e.to_string()))?;
    Ok(binom.sample(rng))
}
