use std::path::PathBuf;

/// Errors raised across the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error in `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("argument error: {0}")]
    Argument(String),

    #[error("state error: {0}")]
    State(String),

    #[error("numeric error in layer {layer}: {reason}")]
    Numeric { layer: usize, reason: String },

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("i/o error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the caller's input rather than by a run.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::Argument(_) | Error::Parse { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
