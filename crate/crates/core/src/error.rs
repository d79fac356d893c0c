use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("index {index} out of range for store of size {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("index {0} listed more than once")]
    DuplicateIndex(usize),

    /// Total kernel mass at the query is zero: nothing in the (masked) store
    /// is close enough to say anything about it.
    #[error("no kernel support at query point")]
    NoSupport,

    #[error("invalid reward {0}: rewards must be 0 or 1")]
    InvalidReward(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("time labels must be given for every sample or for none")]
    LabelMismatch,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("malformed dataset: {0}")]
    Dataset(String),

    #[error("stream exhausted after {0} steps")]
    Exhausted(usize),

    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
