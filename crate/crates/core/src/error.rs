use thiserror::Error;

/// Errors produced across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("degenerate pivot: {0}")]
    DegeneratePivot(String),
    #[error("numerical failure in {context}: {detail}")]
    Numerical { context: String, detail: String },
    #[error("optimization failed on every start: {}", traces.join("; "))]
    Optimization { traces: Vec<String> },
    #[error("partition error: {0}")]
    Partition(String),
    #[error("stratification error: {0}")]
    Stratification(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("fit refused: {0}")]
    NotConverged(String),
    #[error("internal invariant violated: {0}")]
    Internal(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn numerical(context: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Numerical {
            context: context.into(),
            detail: detail.into(),
        }
    }
}
