//! Detection of estimates drifting to infinity from a solver trace.

use serde::{Deserialize, Serialize};

use crate::engine::TraceEntry;
use crate::error::{Error, Result};

/// Iterations inspected at the end of a trace.
pub const WINDOW: usize = 5;
/// Minimum per-iteration growth ratio of `|θ_r|`.
pub const ESTIMATE_GROWTH: f64 = 1.2;
/// Minimum per-iteration growth ratio of the standard error.
pub const STD_ERROR_GROWTH: f64 = 1.5;
/// Largest plausible absolute linear predictor.
pub const MAX_ABS_ETA: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub flagged: bool,
    /// Components whose estimate and standard error both blow up.
    pub components: Vec<usize>,
    /// Largest fitted `|η_i|` at the last iterate, when the model has one.
    pub max_abs_eta: Option<f64>,
    pub eta_exceeded: bool,
}

/// Flags a probable infinite estimate when, over the last [`WINDOW`]
/// iterates, some `|θ_r|` grows at every step by at least
/// [`ESTIMATE_GROWTH`] while its standard error grows by at least
/// [`STD_ERROR_GROWTH`], or when a fitted linear predictor exceeds
/// [`MAX_ABS_ETA`] in absolute value.
pub fn detect_divergence(trace: &[TraceEntry]) -> Result<DivergenceReport> {
    if trace.len() < 3 {
        return Err(Error::argument(format!(
            "divergence check needs at least 3 iterates, got {}",
            trace.len()
        )));
    }
    let window = &trace[trace.len().saturating_sub(WINDOW)..];
    let d = window[0].theta.len();
    let mut components = Vec::new();
    for r in 0..d {
        let growing = window.windows(2).all(|pair| {
            let (a, b) = (&pair[0], &pair[1]);
            let (ea, eb) = (a.theta[r].abs(), b.theta[r].abs());
            let (sa, sb) = (a.std_errors[r], b.std_errors[r]);
            ea > 0.0 && sa > 0.0 && eb >= ESTIMATE_GROWTH * ea && sb >= STD_ERROR_GROWTH * sa
        });
        if growing {
            components.push(r);
        }
    }
    let max_abs_eta = window.last().and_then(|e| e.max_abs_eta);
    let eta_exceeded = max_abs_eta.is_some_and(|v| v > MAX_ABS_ETA);
    Ok(DivergenceReport {
        flagged: eta_exceeded || !components.is_empty(),
        components,
        max_abs_eta,
        eta_exceeded,
    })
}
