use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConvError {
    #[error("dimension `{0}` must be at least 1")]
    ZeroDimension(&'static str),

    #[error("data length {actual} does not match dimensions (expected {expected})")]
    DataLength { expected: usize, actual: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("blocking {0}")]
    Blocking(String),

    #[error("worker count must be at least 1")]
    NoWorkers,
}

pub type Result<T, E = ConvError> = std::result::Result<T, E>;
