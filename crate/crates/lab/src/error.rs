use std::path::Path;

use qntk_core::QntkError;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("usage error: {0}")]
    Usage(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] QntkError),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialize(String),
}

pub type Result<T> = std::result::Result<T, LabError>;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;
pub const EXIT_IO: i32 = 5;

impl LabError {
    pub fn kind(&self) -> &'static str {
        match self {
            LabError::Usage(_) => "usage",
            LabError::Config(_) => "config",
            LabError::Core(QntkError::Diverged { .. }) => "diverged",
            LabError::Core(QntkError::Unstable { .. }) => "unstable",
            LabError::Core(QntkError::Io(_)) | LabError::Io(_) => "io",
            LabError::Core(QntkError::Parse { .. }) => "parse",
            LabError::Core(_) => "numerical",
            LabError::Serialize(_) => "serialize",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Usage(_) | LabError::Config(_) => EXIT_USAGE,
            LabError::Core(QntkError::Diverged { .. }) => EXIT_DIVERGED,
            LabError::Core(QntkError::Io(_)) | LabError::Io(_) => EXIT_IO,
            // Bad inputs detected by the core library are configuration problems.
            LabError::Core(
                QntkError::Invalid(_)
                | QntkError::DimensionMismatch { .. }
                | QntkError::OutOfRange { .. }
                | QntkError::Parse { .. },
            ) => EXIT_USAGE,
            LabError::Core(_) | LabError::Serialize(_) => EXIT_NUMERICAL,
        }
    }
}

#[derive(Debug, Serialize)]
struct ErrorRecord<'a> {
    kind: &'a str,
    exit_code: i32,
    message: String,
}

/// Writes `error.json` into `dir`, creating it if needed. Failures here are ignored;
/// the message still reaches stderr.
pub fn write_error_record(dir: &Path, err: &LabError) {
    let rec = ErrorRecord {
        kind: err.kind(),
        exit_code: err.exit_code(),
        message: err.to_string(),
    };
    if let Ok(text) = serde_json::to_string_pretty(&rec) {
        let _ = std::fs::create_dir_all(dir);
        let _ = std::fs::write(dir.join("error.json"), text + "\n");
    }
}
