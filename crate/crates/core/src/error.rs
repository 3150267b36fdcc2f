//! Error type shared across the toolkit.

use thiserror::Error;

/// Convenience alias used by every fallible operation in this crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Unified error for engine, data, and analysis operations.
#[derive(Debug, Error)]
pub enum Error {
    /// Two tensors (or a tensor and a layer) disagree about dimensions.
    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },

    /// A caller-supplied argument is outside the operation's domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A NaN or infinity surfaced where the engine guarantees finite values.
    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    /// Batch normalization needs at least two samples to form batch statistics.
    #[error("batch of size {size} is too small for batch normalization (need >= 2)")]
    BatchTooSmall { size: usize },

    /// A class label does not fit the configured number of classes.
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    /// Malformed IDX payload (bad magic, truncated body, ...).
    #[error("malformed IDX data at byte {offset}: {message}")]
    Idx { offset: u64, message: String },

    /// Malformed dataset cache file.
    #[error("malformed dataset cache: {0}")]
    Cache(String),

    /// Malformed model blob or sidecar.
    #[error("malformed model file: {0}")]
    Model(String),

    /// Training produced a non-finite loss and cannot continue.
    #[error("training diverged (non-finite loss) at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
