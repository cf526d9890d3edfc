use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::adjust::compute_adjustments_combined;
use super::cumulants::{CombinedCumulants, CumulantSet, CumulantTensor};
use crate::diagnostics::{detect_divergence, DivergenceReport};
use crate::error::{Error, Result};
use crate::linalg::SpdFactor;
use crate::special::normal_quantile;

/// Estimation method: which adjustment is added to the score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
pub enum Method {
    #[serde(rename = "ml")]
    Ml,
    #[serde(rename = "mean-br")]
    MeanBr,
    #[serde(rename = "median-br")]
    MedianBr,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Ml, Method::MeanBr, Method::MedianBr];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ml => "ml",
            Method::MeanBr => "mean-br",
            Method::MedianBr => "median-br",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().replace('_', "-").as_str() {
            "ml" => Ok(Method::Ml),
            "mean-br" | "meanbr" | "mean" => Ok(Method::MeanBr),
            "median-br" | "medianbr" | "median" => Ok(Method::MedianBr),
            other => Err(Error::argument(format!(
                "unknown method '{other}' (expected ml, mean-br or median-br)"
            ))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Joint parameter `(βᵀ, γᵀ)ᵀ` with block sizes `p` and `q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterPoint {
    pub theta: Vec<f64>,
    pub p: usize,
    pub q: usize,
}

impl ParameterPoint {
    pub fn new(theta: Vec<f64>, p: usize, q: usize) -> Result<Self> {
        if theta.len() != p + q {
            return Err(Error::argument(format!(
                "parameter vector has length {} but p + q = {}",
                theta.len(),
                p + q
            )));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::argument("parameter vector has non-finite entries"));
        }
        Ok(ParameterPoint { theta, p, q })
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn beta(&self) -> &[f64] {
        &self.theta[..self.p]
    }

    pub fn gamma(&self) -> &[f64] {
        &self.theta[self.p..]
    }
}

/// Capabilities a regression model supplies to the solver.
///
/// All evaluations must be pure functions of `theta`.
pub trait ModelContract: Sync {
    /// `(p, q)`: mean-block and precision-block sizes.
    fn dimensions(&self) -> (usize, usize);

    fn log_likelihood(&self, theta: &[f64]) -> Result<f64>;

    fn score(&self, theta: &[f64]) -> Result<DVector<f64>>;

    fn cumulants(&self, theta: &[f64]) -> Result<CumulantSet>;

    fn fisher_information(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.cumulants(theta)?.info)
    }

    /// Cumulants in the form the adjustment formulas consume. Models with
    /// cheaper direct expressions for `P+Q` and `P/3+Q/2` override this.
    fn adjustment_cumulants(&self, theta: &[f64]) -> Result<CombinedCumulants> {
        Ok(self.cumulants(theta)?.combined())
    }

    /// Dense cumulant arrays, for oracle testing only.
    fn dense_cumulants(&self, theta: &[f64]) -> Option<Result<CumulantTensor>> {
        let _ = theta;
        None
    }

    fn default_start(&self) -> Result<ParameterPoint>;

    /// Fitted linear predictors on the unbounded scale, if the model has any
    /// whose divergence signals an infinite estimate.
    fn linear_predictors(&self, theta: &[f64]) -> Option<Vec<f64>> {
        let _ = theta;
        None
    }

    fn parameter_dimension(&self) -> usize {
        let (p, q) = self.dimensions();
        p + q
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverOptions {
    pub method: Method,
    pub max_iterations: usize,
    /// Applied to the max-norm of `i⁻¹ Ũ`.
    pub tolerance: f64,
    pub max_step_halvings: usize,
    pub start: Option<ParameterPoint>,
    /// Stop early once the iterate trace shows the divergence pattern.
    pub monitor_divergence: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            method: Method::Ml,
            max_iterations: 200,
            tolerance: 1e-8,
            max_step_halvings: 20,
            start: None,
            monitor_divergence: true,
        }
    }
}

impl SolverOptions {
    pub fn for_method(method: Method) -> Self {
        SolverOptions {
            method,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::argument("solver tolerance must be positive"));
        }
        if self.max_iterations < 1 {
            return Err(Error::argument("max_iterations must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceEntry {
    pub theta: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub scaled_score_norm: f64,
    pub max_abs_eta: Option<f64>,
    pub step_halvings: usize,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub method: Method,
    pub estimate: ParameterPoint,
    pub vcov: DMatrix<f64>,
    pub std_errors: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub divergence_flag: bool,
    pub divergence: Option<DivergenceReport>,
    pub final_adjusted_score_norm: f64,
    pub trace: Vec<TraceEntry>,
}

struct Evaluation {
    theta: DVector<f64>,
    factor: SpdFactor,
    adjusted: DVector<f64>,
    scaled: DVector<f64>,
    norm: f64,
}

/// Adjusted score `Ũ = U + B` with `B ∈ {0, A*, Ã}` and its scaled form
/// `i⁻¹ Ũ` at `theta`.
pub fn adjusted_score<M: ModelContract + ?Sized>(
    model: &M,
    theta: &[f64],
    method: Method,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let ev = evaluate(model, theta, method)?;
    Ok((ev.adjusted, ev.scaled))
}

fn evaluate<M: ModelContract + ?Sized>(
    model: &M,
    theta: &[f64],
    method: Method,
) -> Result<Evaluation> {
    let score = model.score(theta)?;
    let (info, adjustment) = match method {
        Method::Ml => (model.fisher_information(theta)?, None),
        Method::MeanBr | Method::MedianBr => {
            let c = model.adjustment_cumulants(theta)?;
            let bundle = compute_adjustments_combined(&c)?;
            let adj = if method == Method::MeanBr {
                bundle.mean_adj
            } else {
                bundle.median_adj
            };
            (c.info, Some(adj))
        }
    };
    let factor = SpdFactor::new(&info)?;
    let adjusted = match adjustment {
        Some(a) => score + a,
        None => score,
    };
    if adjusted.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("adjusted score is not finite"));
    }
    let scaled = factor.solve(&adjusted);
    let norm = scaled.amax();
    Ok(Evaluation {
        theta: DVector::from_column_slice(theta),
        factor,
        adjusted,
        scaled,
        norm,
    })
}

fn recoverable(err: &Error) -> bool {
    matches!(err, Error::Domain(_) | Error::Numerical { .. })
}

fn trace_entry<M: ModelContract + ?Sized>(
    model: &M,
    ev: &Evaluation,
    halvings: usize,
) -> TraceEntry {
    let inv = ev.factor.inverse();
    let theta: Vec<f64> = ev.theta.iter().copied().collect();
    let max_abs_eta = model
        .linear_predictors(&theta)
        .map(|etas| etas.iter().fold(0.0f64, |m, e| m.max(e.abs())));
    TraceEntry {
        std_errors: inv.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect(),
        theta,
        scaled_score_norm: ev.norm,
        max_abs_eta,
        step_halvings: halvings,
    }
}

/// Quasi-Fisher scoring for `U(θ) + B(θ) = 0`:
/// `θ ← θ + i(θ)⁻¹ {U(θ) + B(θ)}`, halving the step while the max-norm of
/// `i⁻¹Ũ` fails to decrease.
pub fn solve<M: ModelContract + ?Sized>(model: &M, opts: &SolverOptions) -> Result<FitResult> {
    opts.validate()?;
    let (p, q) = model.dimensions();
    let start = match &opts.start {
        Some(s) => s.clone(),
        None => model.default_start()?,
    };
    if start.dim() != p + q {
        return Err(Error::argument(format!(
            "start has {} components, model expects {}",
            start.dim(),
            p + q
        )));
    }

    let mut current = evaluate(model, &start.theta, opts.method)?;
    let mut trace = vec![trace_entry(model, &current, 0)];
    let mut iterations = 0;
    let mut converged = current.norm < opts.tolerance;
    let mut divergence = None;

    while !converged && iterations < opts.max_iterations {
        let step = current.scaled.clone();
        let mut lambda = 1.0;
        let mut accepted: Option<(Evaluation, usize)> = None;
        let mut fallback: Option<(Evaluation, usize)> = None;
        for halvings in 0..=opts.max_step_halvings {
            let candidate = &current.theta + &step * lambda;
            let cand: Vec<f64> = candidate.iter().copied().collect();
            match evaluate(model, &cand, opts.method) {
                Ok(ev) => {
                    if ev.norm < current.norm {
                        accepted = Some((ev, halvings));
                        break;
                    }
                    if fallback.is_none() {
                        fallback = Some((ev, halvings));
                    }
                }
                Err(e) if recoverable(&e) => {}
                Err(e) => return Err(e),
            }
            lambda *= 0.5;
        }
        let Some((next, halvings)) = accepted.or(fallback) else {
            // No admissible step: the iterate may have run off to infinity.
            if opts.monitor_divergence && trace.len() >= 3 {
                let report = detect_divergence(&trace)?;
                if report.flagged {
                    divergence = Some(report);
                }
            }
            break;
        };
        current = next;
        iterations += 1;
        trace.push(trace_entry(model, &current, halvings));
        converged = current.norm < opts.tolerance;
        if !converged && opts.monitor_divergence && trace.len() >= crate::diagnostics::WINDOW {
            let report = detect_divergence(&trace)?;
            if report.flagged {
                divergence = Some(report);
                break;
            }
        }
    }

    let vcov = current.factor.inverse();
    let std_errors = vcov.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect();
    let theta: Vec<f64> = current.theta.iter().copied().collect();
    Ok(FitResult {
        method: opts.method,
        estimate: ParameterPoint { theta, p, q },
        vcov,
        std_errors,
        iterations,
        converged,
        divergence_flag: divergence.is_some(),
        divergence,
        final_adjusted_score_norm: current.norm,
        trace,
    })
}

/// `estimate ± z_{(1+level)/2} · se`.
pub fn wald_bounds(estimate: f64, std_error: f64, level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::argument(format!(
            "confidence level must lie in (0,1), got {level}"
        )));
    }
    let z = normal_quantile(0.5 * (1.0 + level))?;
    Ok((estimate - z * std_error, estimate + z * std_error))
}

pub fn wald_interval(fit: &FitResult, component: usize, level: f64) -> Result<(f64, f64)> {
    if component >= fit.estimate.dim() {
        return Err(Error::argument(format!(
            "component {component} out of range for a {}-parameter fit",
            fit.estimate.dim()
        )));
    }
    if !fit.converged {
        return Err(Error::argument("Wald intervals need a converged fit"));
    }
    wald_bounds(
        fit.estimate.theta[component],
        fit.std_errors[component],
        level,
    )
}
