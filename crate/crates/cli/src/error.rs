use std::io;
use std::path::PathBuf;

use qrm_core::CoreError;
use qrm_gan::GanError;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("missing {what}: {}", path.display())]
    MissingInput { what: String, path: PathBuf },
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Gan(#[from] GanError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Serialize)]
struct ErrorLine<'a> {
    error: &'a str,
    message: String,
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::MissingInput { .. } => "missing_input",
            CliError::Core(_) => "core",
            CliError::Gan(_) => "model",
            CliError::Io { .. } => "io",
            CliError::Csv(_) => "csv",
            CliError::Json(_) => "json",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    /// One JSON object on a single line: `{"error": kind, "message": text}`.
    pub fn line(&self) -> String {
        error_line(self.kind(), self.to_string())
    }
}

pub fn error_line(kind: &str, message: String) -> String {
    serde_json::to_string(&ErrorLine { error: kind, message }).expect("error line serializes")
}
