use thiserror::Error;

/// Errors produced by the batched eigendecomposition pipeline.
///
/// Stage-level failures carry the batch index of the first offending
/// matrix so callers can locate bad inputs in large batches.
#[derive(Debug, Error)]
pub enum EigError {
    #[error("matrix {batch_index} is not symmetric within tolerance")]
    AsymmetricInput { batch_index: usize },

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("split index {split} out of range for dimension {dim}")]
    SplitOutOfRange { split: usize, dim: usize },

    #[error("{stage}: matrix {batch_index} did not converge within the sweep budget")]
    NoConvergence {
        stage: &'static str,
        batch_index: usize,
    },

    #[error("{stage}: problem {problem}, root {root} exceeded the iteration cap")]
    MaxItersExceeded {
        stage: &'static str,
        problem: usize,
        root: usize,
    },

    #[error("interlacing violated at problem {problem}, root {root} (upstream root error)")]
    InterlacingViolation { problem: usize, root: usize },

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("bad magic bytes (expected \"BEIG\")")]
    BadMagic,

    #[error("unsupported format version {0}")]
    BadVersion(u32),

    #[error("truncated payload: expected {expected} bytes, got {actual}")]
    TruncatedPayload { expected: usize, actual: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EigError>;
