use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("graph is not connected: node {unreachable} cannot be reached from node 1")]
    Connectivity { unreachable: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("no stability change in delay range [{lo}, {hi}] s: {detail}")]
    SearchRange { lo: f64, hi: f64, detail: String },

    #[error("config error in {location}: {message}")]
    Config { location: String, message: String },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
