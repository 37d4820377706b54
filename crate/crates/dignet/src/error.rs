//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DigError {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("load error: {0}")]
    Load(String),

    #[error("generation error: {0}")]
    Generation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, DigError>;

impl DigError {
    /// Process exit code for the CLI: 2 for validation/config problems,
    /// 3 for runtime and numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            DigError::Validation(_) | DigError::Config(_) | DigError::Load(_) => 2,
            _ => 3,
        }
    }
}
