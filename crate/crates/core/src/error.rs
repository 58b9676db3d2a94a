use alloc::string::String;
use alloc::vec::Vec;

/// Errors produced by the simulator core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{what}: dimension {dim} exceeds cap {cap}")]
    ResourceLimit {
        what: &'static str,
        dim: usize,
        cap: usize,
    },

    #[error("{what} did not converge (last residual {residual:e})")]
    Convergence { what: &'static str, residual: f64 },

    #[error("equilibrium solver failed after {} iterations (last gradient norm {:e})", .history.len(), .history.last().copied().unwrap_or(f64::NAN))]
    Solver { history: Vec<f64> },

    #[error("propagator pole: {0}")]
    Pole(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("ill-conditioned: {0}")]
    IllConditioned(String),

    #[error("fit failed: {0}")]
    Fit(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
