use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: rating {value} outside [{min}, {max}]")]
    Range {
        line: usize,
        value: i64,
        min: u8,
        max: u8,
    },

    #[error("line {line}: duplicate rating for user {user}, item {item}")]
    Duplicate { line: usize, user: u32, item: u32 },

    #[error("no data: {0}")]
    NoData(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("user {0} has no ratings in the training data")]
    ColdUser(u32),

    #[error("recommendation lists belong to different users ({0} vs {1})")]
    UserMismatch(u32, u32),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Write(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
