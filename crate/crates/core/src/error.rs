//! Error type shared by all solver and integrator entry points.

use crate::grid::Domain;

/// Unified error for field operations, solvers, and integrators.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Operation requires a specific domain kind.
    #[error("domain mismatch: operation requires {required:?}, field lives on {found:?}")]
    DomainMismatch { required: Domain, found: Domain },

    /// Two fields that must share a grid do not.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// Grid construction rejected the requested size.
    #[error("unsupported grid size {nx}x{ny}: {reason}")]
    BadGridSize { nx: usize, ny: usize, reason: String },

    /// A caller-supplied argument is out of range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A numerical precondition (neutrality, mean-zero, positivity) failed.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Charge density fails the neutrality gate of the periodic Poisson solve.
    #[error("charge density is not neutral: |mean| = {mean:.3e} exceeds {bound:.3e}")]
    NonNeutralCharge { mean: f64, bound: f64 },

    /// An iterative linear solver ran out of iterations.
    #[error("linear solver stalled after {iterations} iterations: residual {residual:.3e} > tolerance {tolerance:.3e}")]
    SolverStalled {
        iterations: usize,
        residual: f64,
        tolerance: f64,
    },

    /// A time step was rejected; the caller may retry with `suggested_dt`.
    #[error("step rejected ({reason}); retry with dt <= {suggested_dt:.3e}")]
    StepRejected { reason: String, suggested_dt: f64 },

    /// Non-finite values appeared during time integration.
    #[error("solution blew up at step {step_index}: non-finite values in {field}")]
    BlowUp { step_index: u64, field: String },

    /// A statistical experiment has too few samples to report.
    #[error("statistics underpowered: {0}")]
    Underpowered(String),

    /// Binary field record could not be decoded.
    #[error("field record format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
