use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Input lies outside the domain where the quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// A root or extremum does not exist for the requested data.
    #[error("no solution: {reason} (attainable interval {lo:e} .. {hi:e})")]
    NoSolution { reason: String, lo: f64, hi: f64 },

    #[error("collision: {0}")]
    Collision(String),

    #[error("no convergence after {iterations} iterations, residual {residual:e}")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("degenerate critical point: {0}")]
    Degenerate(String),

    #[error("integration failed: {0}")]
    Integration(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
