//! Numerical library for (omega, rho)-periodic solutions of impulsive
//! integro-differential systems
//!
//! ```text
//! y'(t) = A y(t) + f(t, y(t), int_0^t g(t, s, y(t)) ds),   t != tau_k
//! Delta y|_{t = tau_k} = B_k y(tau_k) + d_k
//! ```
//!
//! with the generalized periodicity condition `y(t + omega) = rho y(t)`.
//! The crate provides:
//!
//! - matrix semigroup algebra (`semigroup`): exponentials, growth bounds
//!   `|T(t)| <= M exp(gamma t)`, commutation checks, gap inversion;
//! - impulse bookkeeping and direct simulation (`schedule`, `flow`);
//! - the Green-type kernel `H(t, tau)` and its closed-form bounds
//!   `C1`, `C1'`, `C2`, `C2'` (`kernel`);
//! - periodic solvers: boundary-equation linear solve and Picard iteration
//!   with contraction certificates and invariant-ball checks (`solver`);
//! - assumption checking, shooting oracle and solution validation
//!   (`verifier`);
//! - seeded problem generators (`corpus`).
//!
//! All norms are operator/euclidean 2-norms.

pub mod corpus;
pub mod error;
pub mod flow;
pub mod kernel;
pub mod quad;
pub mod schedule;
pub mod semigroup;
pub mod solver;
pub mod system;
pub mod trajectory;
pub mod verifier;

pub use error::{Error, Result};
pub use flow::{
    evolve_linear, evolve_linear_from, evolve_semilinear, evolve_semilinear_from,
    periodicity_residual, transition_formula_state, ForcingFn, SemilinearFn, StepConfig,
    VolterraArg, VolterraKernelFn, VolterraProblem,
};
pub use kernel::{
    bound_c1, bound_c1_commuting, bound_c2, bound_c2_commuting, bound_report, evaluate_bounds,
    kernel_grid_lhs, kernel_h, kernel_h_commuting, kernel_integral_numeric, kernel_sum_numeric,
    BoundInputs, BoundReport, KernelBranch, KernelEvaluation, KernelVariant,
};
pub use quad::{GaussLegendre, QuadratureConfig};
pub use schedule::{Impulse, ImpulseSchedule};
pub use semigroup::{
    check_commute, estimate_growth, estimate_growth_with, expm, invert_monodromy_gap, log_norm,
    op_norm, spectral_abscissa, CommuteCheck, GrowthEstimate, GrowthMethod, MonodromyGap,
};
pub use solver::{
    certificate_with_growth, contraction_certificate, existence_ball, picard_apply,
    solve_linear_periodic, solve_picard_from, solve_semilinear_picard, BallCheckReport,
    Certificate, ConvergenceLog, PicardConfig, PicardSolution, PicardWorkspace,
};
pub use system::SystemSpec;
pub use trajectory::{JumpRecord, PiecewiseTrajectory, Segment};
pub use verifier::{
    check_assumptions, shooting_oracle, validate_solution, AssumptionReport, AssumptionStatus,
    NewtonConfig, ValidationReport, ValidationTolerances,
};
