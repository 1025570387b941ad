use thiserror::Error;

/// Errors produced by the numerical operations in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },

    #[error("non-finite entries in {what}")]
    NonFinite { what: String },

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("reversed interval: s = {s} > t = {t}")]
    ReversedInterval { s: f64, t: f64 },

    #[error("invalid impulse schedule: {reason}")]
    InvalidSchedule { reason: String },

    #[error("invalid system: {reason}")]
    InvalidSystem { reason: String },

    #[error("monodromy gap rho - T(omega)*prod(E+B_k) is singular (cond estimate {cond:.3e})")]
    SingularGap { cond: f64 },

    #[error("eigenvalue computation failed")]
    EigenFailure,

    #[error("quadrature failure: {detail}")]
    QuadratureFailure { detail: String },

    #[error("time step failure at t = {t}: minimal step reached")]
    StepFailure { t: f64 },

    #[error("state became non-finite at t = {t}")]
    NonFiniteState { t: f64 },

    #[error("trajectory covers [{got_start}, {got_end}] but [{need_start}, {need_end}] is required")]
    ShortTrajectory {
        need_start: f64,
        need_end: f64,
        got_start: f64,
        got_end: f64,
    },

    #[error("Picard iteration did not converge after {iterations} iterations (last distance {last_distance:.3e})")]
    NoConvergence {
        iterations: usize,
        last_distance: f64,
        log: Box<crate::solver::ConvergenceLog>,
    },

    #[error("Newton iteration diverged after {iterations} iterations (residual {residual:.3e})")]
    NewtonDiverged { iterations: usize, residual: f64 },

    #[error("gap inverse does not commute with T(t) (residual {residual:.3e} at t = {t})")]
    CommutationViolation { residual: f64, t: f64 },

    #[error("Lipschitz estimate unstable: refinements differ by {spread:.1}%")]
    LipschitzEstimateUnstable { spread: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
