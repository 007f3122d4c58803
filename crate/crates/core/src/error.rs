use thiserror::Error;

/// Errors raised by the statistics, standardizations and the simulation harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{func}({x}) is undefined; requires x > 0")]
    Domain { func: &'static str, x: f64 },

    #[error("matrix is not positive definite (Cholesky pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A sample covariance or scatter matrix is singular.
    #[error("rank deficiency: {0}")]
    Rank(String),

    #[error("singular design: {0}")]
    SingularDesign(String),

    /// A size bound required by a statistic or standardization does not hold.
    #[error("{0}")]
    Precondition(String),

    #[error("regime violation: {0}")]
    RegimeViolation(String),

    #[error("degenerate scale: {0}")]
    DegenerateScale(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True for failures caused by the numbers in the data rather than by the
    /// requested configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. } | Error::Rank(_) | Error::SingularDesign(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
