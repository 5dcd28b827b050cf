use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: String,
        found: String,
    },

    /// A singular value or eigenvalue sits too close to the rank cut for the
    /// rank decision to be trusted.
    #[error("ambiguous rank cut in {context}: value {value:.3e} within a factor 10 of cut {cut:.3e}")]
    ToleranceAmbiguity { context: String, value: f64, cut: f64 },

    #[error("matrix is not positive semidefinite: eigenvalue {eigenvalue:.3e}")]
    NotPsd { eigenvalue: f64 },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("element does not lie in the module (residual {residual:.3e})")]
    NotInModule { residual: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("quasi-orthonormal system construction stalled with residual projection norm {residual:.3e}")]
    Stall { residual: f64 },

    #[error("no comparison formula from {from} to {to}")]
    UnsupportedPair { from: String, to: String },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("infeasible random instance spec: {0}")]
    InfeasibleSpec(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn dims(context: impl Into<String>, expected: impl ToString, found: impl ToString) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
