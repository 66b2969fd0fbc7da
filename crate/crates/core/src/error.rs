use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JaggedError {
    #[error("size mismatch: expected {expected} elements, got {actual}")]
    SizeMismatch { expected: usize, actual: usize },

    #[error("invalid offsets: {0}")]
    InvalidOffsets(String),

    #[error("sample {sample} has length {length}, exceeding max_len {max_len}")]
    LengthOutOfBounds {
        sample: usize,
        length: usize,
        max_len: usize,
    },

    #[error("segment layout mismatch at sample {sample}")]
    SegmentMismatch { sample: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("block size must be at least 1")]
    ZeroBlockSize,

    #[error("unknown operator `{0}`")]
    UnknownOp(String),

    #[error("operator `{0}` has no backward registered")]
    NoBackward(String),

    #[error("saved attention state does not match inputs: {0}")]
    StaleSaved(String),

    #[error("non-finite function value at input {slot}, coordinate {index}")]
    NonFinite { slot: usize, index: usize },

    #[error("fixture: {0}")]
    Fixture(String),
}

pub type Result<T, E = JaggedError> = std::result::Result<T, E>;
