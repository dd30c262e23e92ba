use std::path::PathBuf;

use thiserror::Error;

pub type CliResult<T> = Result<T, CliError>;

/// Error classes of the front end; each maps to its own exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },

    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Runtime(_) => 4,
        }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: impl std::error::Error + Send + Sync + 'static) -> Self {
        CliError::Io {
            path: path.into(),
            source: Box::new(source),
        }
    }
}

impl From<spinbath_core::Error> for CliError {
    fn from(e: spinbath_core::Error) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else if e.is_io() {
            CliError::Io {
                path: PathBuf::new(),
                source: Box::new(e),
            }
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

/// Attaches a path to I/O-class failures from the core crate.
pub(crate) trait WithPath<T> {
    fn at(self, path: &std::path::Path) -> CliResult<T>;
}

impl<T> WithPath<T> for spinbath_core::Result<T> {
    fn at(self, path: &std::path::Path) -> CliResult<T> {
        self.map_err(|e| {
            if e.is_io() {
                CliError::io(path, e)
            } else {
                e.into()
            }
        })
    }
}

impl<T> WithPath<T> for std::io::Result<T> {
    fn at(self, path: &std::path::Path) -> CliResult<T> {
        self.map_err(|e| CliError::io(path, e))
    }
}

impl<T> WithPath<T> for Result<T, csv::Error> {
    fn at(self, path: &std::path::Path) -> CliResult<T> {
        self.map_err(|e| CliError::io(path, e))
    }
}
