use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    /// The configuration is malformed or out of range.
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] cbas_core::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    /// An artifact failed its schema check.
    #[error("invalid artifact {file}: {reason}")]
    Artifact { file: String, reason: String },
}

impl BenchError {
    /// Process exit code: 1 for configuration problems, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, BenchError>;
