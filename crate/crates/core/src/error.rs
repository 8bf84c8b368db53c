use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or inconsistent configuration. `key` names the offending field.
    #[error("configuration error in `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// An engine (built-in or adapter process) failed to serve a request.
    #[error("engine `{engine}` failed on request {request_id}: {message}{}", fmt_stderr(.stderr))]
    Engine {
        engine: String,
        request_id: String,
        message: String,
        stderr: String,
    },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("estimator training failed: {0}")]
    Training(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("internal error: {0}")]
    Internal(String),
}

fn fmt_stderr(stderr: &str) -> String {
    if stderr.trim().is_empty() {
        String::new()
    } else {
        format!(" (stderr: {})", stderr.trim())
    }
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn engine(
        engine: impl Into<String>,
        request_id: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Engine {
            engine: engine.into(),
            request_id: request_id.into(),
            message: message.into(),
            stderr: String::new(),
        }
    }

    /// Process exit code for the command-line front end: configuration
    /// problems are 2, everything else is 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            _ => 1,
        }
    }
}
