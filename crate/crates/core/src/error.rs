use thiserror::Error;

/// Errors raised by the numerical laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("derivative vanishes at x = {x}")]
    Singularity { x: f64 },

    /// Some block at `depth` was seen fewer times than the reliability floor.
    #[error("undersampled block statistics at depth {depth} (largest reliable depth: {largest_reliable:?})")]
    UnderSampled {
        depth: usize,
        largest_reliable: Option<usize>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Error {
    Error::Parameter {
        name,
        reason: reason.into(),
    }
}
