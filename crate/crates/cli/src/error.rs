use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}line {line}: {message}", file.as_ref().map(|f| format!("{}: ", f.display())).unwrap_or_default())]
    Config {
        file: Option<PathBuf>,
        line: usize,
        message: String,
    },

    #[error("override: {0}")]
    Override(String),

    #[error("invalid configuration: {0}")]
    Invalid(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Core(#[from] gradflow_core::Error),
}

impl CliError {
    pub fn config(line: usize, message: impl Into<String>) -> Self {
        CliError::Config {
            file: None,
            line,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Attaches a file name to a configuration or tableau parse error.
    pub fn in_file(self, path: &Path) -> Self {
        match self {
            CliError::Config { line, message, .. } => CliError::Config {
                file: Some(path.to_path_buf()),
                line,
                message,
            },
            CliError::Core(gradflow_core::Error::Parse { line, message }) => CliError::Config {
                file: Some(path.to_path_buf()),
                line,
                message,
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
