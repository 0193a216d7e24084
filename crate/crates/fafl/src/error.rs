//! Error types shared across the crate.

use thiserror::Error;

/// Unified error type for all simulator operations.
#[derive(Debug, Error)]
pub enum FaflError {
    /// Invalid configuration value or malformed config file.
    #[error("config error: {0}")]
    Config(String),

    /// Local training preconditions violated (empty shard, bad dims).
    #[error("training error: {0}")]
    Training(String),

    /// Evaluation preconditions violated (empty dataset).
    #[error("evaluation error: {0}")]
    Evaluation(String),

    /// Dataset partitioning failure.
    #[error("partition error: {0}")]
    Partition(String),

    /// CSV ingestion failure.
    #[error("ingestion error: {0}")]
    Ingestion(String),

    /// Aggregation over mismatched or empty client sets.
    #[error("aggregation error: {0}")]
    Aggregation(String),

    /// Secure channel failure (counter exhaustion, key material).
    #[error("channel error: {0}")]
    Channel(String),

    /// Structurally invalid frame (bad magic, version, length).
    #[error("frame error: {0}")]
    Frame(String),

    /// AEAD tag verification failure.
    #[error("authentication error: tag mismatch")]
    Auth,

    /// Parameter codec failure (truncation, count mismatch).
    #[error("codec error: {0}")]
    Codec(String),

    /// Report emission failure.
    #[error("report error: {0}")]
    Report(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FaflError>;

impl FaflError {
    /// Process exit code for the CLI: 1 for configuration problems,
    /// 2 for anything that failed at runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            FaflError::Config(_) => 1,
            _ => 2,
        }
    }
}
