use thiserror::Error;

use crate::compress::CompressionReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("singular matrix: pivot {pivot} below threshold at step {step}")]
    SingularMatrix { step: usize, pivot: f64 },

    #[error("corrupt HSS form: {0}")]
    CorruptForm(String),

    #[error("matrix source contract violated: {0}")]
    ContractViolation(String),

    /// Adaptive sampling reached `max_d` without every node passing the
    /// rank-gap test. The report holds the trace up to the failure.
    #[error("rank budget exhausted: sample count {max_d} reached at node {node}")]
    RankBudgetExhausted {
        max_d: usize,
        node: usize,
        report: Box<CompressionReport>,
    },

    #[error("refused: {0}")]
    Refused(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn dims(msg: impl Into<String>) -> Error {
    Error::DimensionMismatch(msg.into())
}
