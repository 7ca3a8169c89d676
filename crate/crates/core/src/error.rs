use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to load the Java grammar: {0}")]
    Grammar(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("scan root {0} does not exist or is not a directory")]
    MissingRoot(PathBuf),

    #[error("invalid configuration at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("malformed report {path} at row {row}: {message}")]
    MalformedReport { path: String, row: usize, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
