//! Error types shared across the toolkit.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad configuration or usage (exit code 1).
    #[error("config error: {0}")]
    Config(String),

    /// Malformed or insufficient data (exit code 2).
    #[error("data error: {0}")]
    Data(String),

    /// Parse failure at a specific line of an input file.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Numeric failure such as training divergence (exit code 3).
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A pipeline stage was invoked before its input artifact exists.
    #[error("missing artifact {path}: run the `{stage}` stage first")]
    MissingStage { stage: String, path: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Data(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI contract.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Data(_) | Error::Parse { .. } | Error::MissingStage { .. } => 2,
            Error::Numeric(_) => 3,
            Error::Io(_) => 2,
        }
    }
}
