use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid scenario: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error("referenced file does not exist: {}", .0.display())]
    MissingFile(PathBuf),
    #[error(transparent)]
    Core(#[from] icf_core::Error),
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("unknown planner mode `{0}`")]
    UnknownMode(String),
}

pub type Result<T> = std::result::Result<T, SimError>;
