use thiserror::Error;

/// Errors raised by the modelling, fitting and simulation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A documented precondition of an operation does not hold for the data.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The random-effect covariance is singular where a positive definite
    /// matrix is required. Callers with `sigma == 0` should use the
    /// degenerate (plug-in) path instead.
    #[error("singular covariance: {0}")]
    SingularCovariance(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
