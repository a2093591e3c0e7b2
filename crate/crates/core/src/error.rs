use thiserror::Error;

/// Errors raised by the toolkit.
///
/// Qualification and hypothesis failures are kept distinct from geometric
/// errors so that verification reports never mistake an unjustified
/// computation for a violated rule.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("domain mismatch: {0}")]
    DomainMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("point is not in the set (distance {distance:.3e})")]
    PointNotInSet { distance: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("qualification violated: {0}")]
    QualificationViolated(String),

    #[error("integrable boundedness violated: {0}")]
    Unbounded(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("expression error: {0}")]
    Expression(String),

    #[error("scenario error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
