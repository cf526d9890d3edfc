//! Maximum likelihood, mean bias-reduced and median bias-reduced estimation
//! through adjusted score equations, with beta and beta-binomial regression
//! models, a GLM reference implementation and a Monte Carlo harness.

pub mod betabin;
pub mod betareg;
pub mod data;
pub mod diagnostics;
pub mod doubleindex;
pub mod engine;
pub mod error;
pub mod glm;
pub mod linalg;
pub mod links;
pub mod output;
pub mod report;
pub mod rng;
pub mod selftest;
pub mod simulation;
pub mod special;

pub use engine::{
    adjusted_score, compute_adjustments, compute_adjustments_combined, index_notation_oracle,
    solve, wald_bounds, wald_interval, AdjustmentBundle, CombinedCumulants, CumulantSet,
    CumulantTensor, FitResult, Method, ModelContract, ParameterPoint, SolverOptions, TraceEntry,
};
pub use error::{Error, Result};
