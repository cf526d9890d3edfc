//! Model-agnostic machinery: score adjustments for mean and median bias
//! reduction, the quasi-Fisher scoring solver and Wald inference.

mod adjust;
mod cumulants;
pub mod oracle;
mod solver;

pub use adjust::{compute_adjustments, compute_adjustments_combined, AdjustmentBundle};
pub use cumulants::{CombinedCumulants, CumulantSet, CumulantTensor};
pub use oracle::index_notation_oracle;
pub use solver::{
    adjusted_score, solve, wald_bounds, wald_interval, FitResult, Method, ModelContract,
    ParameterPoint, SolverOptions, TraceEntry,
};
