use alloc::string::String;

use crate::solver::SolveStatus;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("stage {stage} out of range 1..={stages}")]
    StageOutOfRange { stage: usize, stages: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cut coefficients must be finite")]
    NonFiniteCut,
    #[error("domain violation: {0}")]
    Domain(&'static str),
    #[error("solver returned {status:?} at stage {stage} (scenario {scenario:?})")]
    Solve {
        stage: usize,
        scenario: Option<usize>,
        status: SolveStatus,
    },
    #[error("program has {vars} variables, above the limit of {limit}")]
    TooLarge { vars: usize, limit: usize },
    #[error("non-finite value encountered: {0}")]
    NonFinite(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
