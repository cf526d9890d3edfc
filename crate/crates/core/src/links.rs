//! Link functions mapping a bounded model parameter to an unconstrained
//! linear predictor. Every link exposes the inverse map together with its
//! first and second derivatives with respect to the predictor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{normal_cdf, normal_pdf, normal_quantile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Logit,
    Probit,
    Log,
    Identity,
}

impl Link {
    pub fn name(self) -> &'static str {
        match self {
            Link::Logit => "logit",
            Link::Probit => "probit",
            Link::Log => "log",
            Link::Identity => "identity",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "logit" => Ok(Link::Logit),
            "probit" => Ok(Link::Probit),
            "log" => Ok(Link::Log),
            "identity" => Ok(Link::Identity),
            other => Err(Error::argument(format!("unknown link function '{other}'"))),
        }
    }

    /// g(value).
    pub fn apply(self, value: f64) -> Result<f64> {
        let out = match self {
            Link::Logit => {
                if !(value > 0.0 && value < 1.0) {
                    return Err(Error::domain(format!("logit undefined at {value}")));
                }
                (value / (1.0 - value)).ln()
            }
            Link::Probit => {
                if !(value > 0.0 && value < 1.0) {
                    return Err(Error::domain(format!("probit undefined at {value}")));
                }
                normal_quantile(value)?
            }
            Link::Log => {
                if !(value > 0.0) {
                    return Err(Error::domain(format!("log link undefined at {value}")));
                }
                value.ln()
            }
            Link::Identity => value,
        };
        Ok(out)
    }

    /// g⁻¹(eta).
    pub fn inverse(self, eta: f64) -> f64 {
        match self {
            Link::Logit => {
                if eta >= 0.0 {
                    1.0 / (1.0 + (-eta).exp())
                } else {
                    let e = eta.exp();
                    e / (1.0 + e)
                }
            }
            Link::Probit => normal_cdf(eta),
            Link::Log => eta.exp(),
            Link::Identity => eta,
        }
    }

    /// 1 − g⁻¹(eta), without cancellation for the symmetric links.
    pub fn inverse_complement(self, eta: f64) -> f64 {
        match self {
            Link::Logit | Link::Probit => self.inverse(-eta),
            _ => 1.0 - self.inverse(eta),
        }
    }

    /// dμ/dη.
    pub fn d1(self, eta: f64) -> f64 {
        match self {
            Link::Logit => {
                let mu = self.inverse(eta);
                mu * (1.0 - mu)
            }
            Link::Probit => normal_pdf(eta),
            Link::Log => eta.exp(),
            Link::Identity => 1.0,
        }
    }

    /// d²μ/dη².
    pub fn d2(self, eta: f64) -> f64 {
        match self {
            Link::Logit => {
                let mu = self.inverse(eta);
                mu * (1.0 - mu) * (1.0 - 2.0 * mu)
            }
            Link::Probit => -eta * normal_pdf(eta),
            Link::Log => eta.exp(),
            Link::Identity => 0.0,
        }
    }
}

impl std::fmt::Display for Link {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
