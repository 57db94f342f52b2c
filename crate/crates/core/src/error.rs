//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong in the library.
///
/// The CLI maps these onto exit codes, so the split between config,
/// data, and numeric failures matters; keep new variants in the right
/// bucket.
#[derive(Debug, Error)]
pub enum Error {
    /// Incompatible matrix shapes, named after both operands.
    #[error("shape mismatch in {op}: left is {left_rows}x{left_cols}, right is {right_rows}x{right_cols}")]
    ShapeMismatch {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    /// A configuration value is out of range or inconsistent.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// An IDX file could not be parsed; `offset` is the byte position.
    #[error("IDX parse error at byte {offset} in {path}: {reason}")]
    IdxParse {
        path: String,
        offset: u64,
        reason: String,
    },

    /// A checkpoint file is missing fields, truncated, or inconsistent.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Training produced a non-finite loss; the batch index is reported.
    #[error("non-finite loss at epoch {epoch}, batch {batch}: {value}")]
    NonFiniteLoss { epoch: usize, batch: usize, value: f64 },

    /// A trace does not belong to the parameter set it was paired with.
    #[error("trace/parameter mismatch: {0}")]
    TraceMismatch(String),

    /// Label rows that are not exactly one-hot.
    #[error("malformed one-hot labels: {0}")]
    MalformedLabels(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    ) -> Self {
        Error::ShapeMismatch {
            op,
            left_rows: left.0,
            left_cols: left.1,
            right_rows: right.0,
            right_cols: right.1,
        }
    }
}
