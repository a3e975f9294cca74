use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("Hurst index must lie strictly inside (0,1), got {0}")]
    InvalidHurst(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cannot parse model specification {input:?}: {reason}")]
    ModelSyntax { input: String, reason: String },

    #[error("unsupported model for this operation: {0}")]
    UnsupportedModel(String),

    #[error("observation grid is not regular (max relative step deviation {deviation:e})")]
    IrregularGrid { deviation: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("covariance matrix is singular or not positive definite (pivot {pivot} = {value:e}); the observations have a degenerate Gaussian law")]
    Singular { pivot: usize, value: f64 },

    #[error("iteration did not converge after {iterations} steps (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("circulant embedding has eigenvalue {value:e} at index {index}; the covariance sequence is not embeddable")]
    NegativeEigenvalue { index: usize, value: f64 },

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Numeric,
    Io,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidHurst(_)
            | Error::InvalidArgument(_)
            | Error::ModelSyntax { .. }
            | Error::UnsupportedModel(_)
            | Error::IrregularGrid { .. }
            | Error::GridMismatch(_)
            | Error::Format(_) => ErrorClass::Validation,
            Error::Singular { .. } | Error::NotConverged { .. } | Error::NegativeEigenvalue { .. } => {
                ErrorClass::Numeric
            }
            Error::Io(_) => ErrorClass::Io,
        }
    }
}
