use std::path::PathBuf;

use thiserror::Error;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] densecorr::Error),

    #[error("config error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("missing split file: expected {}", .0.display())]
    MissingSplit(PathBuf),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Config(_) => "config",
            CliError::Usage(_) => "usage",
            CliError::MissingSplit(_) => "missing_split",
            CliError::Io { .. } => "io",
        }
    }

    /// `{"error": kind, "message": text}` on one line.
    pub fn to_json_line(&self) -> String {
        let message = crate::config::single_line(&self.to_string());
        serde_json::json!({ "error": self.kind(), "message": message }).to_string()
    }
}
