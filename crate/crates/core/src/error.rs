use thiserror::Error;

/// Errors surfaced by any part of the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scheme: {0}")]
    InvalidScheme(String),

    #[error("unsupported channel count {channels}: must be a power of two")]
    UnsupportedChannels { channels: usize },

    #[error("unknown scheme name {0:?}")]
    UnknownScheme(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid layer: {0}")]
    InvalidLayer(String),

    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    #[error("numeric failure in {node}: non-finite value produced")]
    NumericFailure { node: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("ingestion error in {file}: {reason}")]
    Ingestion { file: String, reason: String },

    #[error("corrupt record in {file} at index {index}: label byte {label} out of range")]
    CorruptRecord {
        file: String,
        index: usize,
        label: u8,
    },

    #[error("augmentation config error: {0}")]
    AugmentationConfig(String),

    #[error("degenerate channel {channel}: standard deviation is zero")]
    DegenerateChannel { channel: usize },

    #[error("learning-rate schedule exhausted at epoch {epoch} (covers {max} epochs)")]
    ScheduleExhausted { epoch: usize, max: usize },

    #[error("report error: {0}")]
    Report(String),

    #[error("checkpoint error in {file}: {reason}")]
    Checkpoint { file: String, reason: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
