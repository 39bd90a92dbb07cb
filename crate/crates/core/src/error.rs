use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("no cloud point projects into the detection box")]
    NoDepth,

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("generation error: {0}")]
    Generation(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end: 2 for input and I/O
    /// problems, 3 for domain or degenerate-input failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Format(_)
            | Error::Parse { .. }
            | Error::Input(_)
            | Error::Io { .. }
            | Error::Json(_) => 2,
            Error::Contract(_)
            | Error::Domain(_)
            | Error::Degenerate(_)
            | Error::NoDepth
            | Error::UndefinedMetric(_)
            | Error::Generation(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
