//! Error dynamics, stability monitors and summary statistics over recorded runs.
//!
//! Norms are spectral norms; eigenvalues come from symmetric solvers on
//! symmetrized inputs.

mod recursion;
mod stability;
mod stats;

pub use recursion::{error_recursion, error_step, split_transition, transition_at, ErrorDecomposition};
pub use stability::{
    alpha_from_bounds, check_assumption2, check_assumption4, check_prop2, lyapunov, lyapunov_ascents, BoundsTable,
    ContractionStep, MonitorStatus, Prop2Report, StabilityReport, ASSUMPTION4_TOL, MAX_CONDITION, PROP2_REL_TOL,
};
pub use stats::{remainder_bounds, rmse, rmse_sequence, EnsembleStats, QuadraticFit, RemainderBounds};
