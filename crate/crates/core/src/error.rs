use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Evaluation outside the domain or on the zero set of the density.
    #[error("domain error at {point:?}: {reason}")]
    Domain { point: Vec<f64>, reason: String },

    #[error("matrix field is not positive definite at {point:?}")]
    Factorization { point: Vec<f64> },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    Solver { iterations: usize, residual: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(point: &[f64], reason: impl Into<String>) -> Self {
        Error::Domain {
            point: point.to_vec(),
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
