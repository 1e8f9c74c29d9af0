use thiserror::Error;

use crate::ids::{RankId, TaskId};

/// Errors raised by the model, simulation and builders.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CcmError {
    /// The phase description is malformed (dangling ids, bad partitions, ...).
    #[error("invalid phase spec: {0}")]
    InvalidSpec(String),

    /// A parameter is outside its admissible range.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A value is mathematically undefined for the given input.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unknown rank {0}")]
    UnknownRank(RankId),

    #[error("task {task} is not on rank {rank}")]
    TaskNotOnRank { task: TaskId, rank: RankId },

    /// A lock protocol rule was broken.
    #[error("protocol violation: {0}")]
    Protocol(String),

    /// A cluster summary no longer matches the assignment.
    #[error("stale cluster: {0}")]
    StaleCluster(String),

    /// Exhaustive enumeration would exceed the configured limit.
    #[error("enumeration of {required} assignments exceeds the limit of {limit}")]
    EnumerationLimit { required: u128, limit: u128 },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for CcmError {
    fn from(e: std::io::Error) -> Self {
        CcmError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CcmError>;
