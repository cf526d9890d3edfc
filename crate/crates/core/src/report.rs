//! Serializable summary of a single fit.

use serde::{Deserialize, Serialize};

use crate::diagnostics::DivergenceReport;
use crate::engine::{wald_bounds, FitResult, Method, ModelContract};
use crate::error::Result;
use crate::output::{matrix_rows, sig17, sig17_pairs, sig17_rows, sig17_vec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: String,
    pub method: Method,
    pub n: usize,
    pub components: Vec<String>,
    #[serde(serialize_with = "sig17_vec")]
    pub estimate: Vec<f64>,
    #[serde(serialize_with = "sig17_vec")]
    pub std_errors: Vec<f64>,
    #[serde(serialize_with = "sig17_rows")]
    pub vcov: Vec<Vec<f64>>,
    #[serde(serialize_with = "sig17")]
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    #[serde(serialize_with = "sig17")]
    pub adjusted_score_norm: f64,
    pub divergence_flag: bool,
    pub divergence: Option<DivergenceReport>,
    #[serde(serialize_with = "sig17")]
    pub level: f64,
    /// Wald intervals, one `[lower, upper]` pair per component.
    #[serde(serialize_with = "sig17_pairs")]
    pub wald: Vec<(f64, f64)>,
}

impl FitReport {
    pub fn new<M: ModelContract + ?Sized>(
        model_name: &str,
        n: usize,
        components: Vec<String>,
        model: &M,
        fit: &FitResult,
        level: f64,
    ) -> Result<Self> {
        let wald = fit
            .estimate
            .theta
            .iter()
            .zip(&fit.std_errors)
            .map(|(&e, &s)| wald_bounds(e, s, level))
            .collect::<Result<Vec<_>>>()?;
        Ok(FitReport {
            model: model_name.to_string(),
            method: fit.method,
            n,
            components,
            estimate: fit.estimate.theta.clone(),
            std_errors: fit.std_errors.clone(),
            vcov: matrix_rows(&fit.vcov),
            log_likelihood: model
                .log_likelihood(&fit.estimate.theta)
                .unwrap_or(f64::NAN),
            iterations: fit.iterations,
            converged: fit.converged,
            adjusted_score_norm: fit.final_adjusted_score_norm,
            divergence_flag: fit.divergence_flag,
            divergence: fit.divergence.clone(),
            level,
            wald,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plain-text table of estimates, standard errors and intervals.
    pub fn table(&self) -> String {
        let width = self
            .components
            .iter()
            .map(String::len)
            .max()
            .unwrap_or(0)
            .max(9);
        let mut out = format!(
            "{} {} (n = {}), {} after {} iterations\n",
            self.model,
            self.method,
            self.n,
            if self.converged {
                "converged"
            } else {
                "NOT converged"
            },
            self.iterations
        );
        out += &format!(
            "{:<width$} {:>12} {:>12} {:>12} {:>12}\n",
            "parameter", "estimate", "std.error", "lower", "upper"
        );
        for (k, name) in self.components.iter().enumerate() {
            out += &format!(
                "{:<width$} {:>12.6} {:>12.6} {:>12.6} {:>12.6}\n",
                name, self.estimate[k], self.std_errors[k], self.wald[k].0, self.wald[k].1
            );
        }
        out += &format!("log-likelihood {:.6}\n", self.log_likelihood);
        if self.divergence_flag {
            out += "warning: estimates appear to diverge\n";
        }
        out
    }
}
