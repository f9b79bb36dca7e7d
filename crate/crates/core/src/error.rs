use thiserror::Error;

use crate::fabric::FabricError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KkmError {
    #[error("dimension mismatch in {op}: {detail}")]
    DimensionMismatch { op: &'static str, detail: String },

    #[error("cluster label {label} at position {position} is out of range for k = {k}")]
    LabelOutOfRange { position: usize, label: usize, k: usize },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("divisibility precondition violated: {0}")]
    Divisibility(String),

    #[error("no cost formula for algorithm {algorithm} and phase {phase}")]
    UnknownCostPair { algorithm: String, phase: String },

    #[error(transparent)]
    Fabric(#[from] FabricError),
}

pub type Result<T, E = KkmError> = std::result::Result<T, E>;
