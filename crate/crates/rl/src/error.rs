use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RlError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("non-finite {0}")]
    NonFinite(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("invalid action: {0}")]
    InvalidAction(String),
}

pub type Result<T, E = RlError> = std::result::Result<T, E>;
