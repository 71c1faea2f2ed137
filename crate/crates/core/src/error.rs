use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Input data violates a documented invariant (nonpositive length,
    /// probabilities not summing to one, block index out of range, ...).
    #[error("validation error: {0}")]
    Validation(String),

    #[error("unsupported size: got {got}, need at least {min}")]
    UnsupportedSize { got: usize, min: usize },

    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("matrix {index} is not hyperbolic (trace {trace})")]
    NotHyperbolic { index: usize, trace: f64 },

    #[error("ill-conditioned: {0}")]
    IllConditioned(String),

    /// An iterative method failed to converge.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Operation called outside the regime where it is defined, e.g. an
    /// edge-mode query at a frequency that is not a certified gap.
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
