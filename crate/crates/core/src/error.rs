use thiserror::Error;

/// Errors raised by the identification library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite objective or gradient at iteration {iteration}")]
    Numerical { iteration: usize },

    #[error("step size collapsed at iteration {iteration} after {backtracks} backtracking steps (step {step:e})")]
    StepCollapse {
        iteration: usize,
        backtracks: usize,
        step: f64,
    },

    #[error("unsupported setting: {0}")]
    Unsupported(String),

    #[error("precondition violated: lambda {lambda} is below the required minimum {required}")]
    LambdaBelowThreshold { lambda: f64, required: f64 },

    #[error("compatibility-constant estimation failed: every sample was degenerate")]
    EstimationFailure,

    #[error("zero variance in test-target coordinates {0:?}")]
    DegenerateCoordinates(Vec<usize>),

    #[error("support enumeration limited to n <= {max}, got n = {n}")]
    ScaleGuard { n: usize, max: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn dim_err(msg: impl Into<String>) -> Error {
    Error::Dimension(msg.into())
}
