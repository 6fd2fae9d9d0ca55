use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("under-determined fit: {samples} samples for {coefficients} coefficients")]
    UnderDetermined { samples: usize, coefficients: usize },

    #[error("singular fit: normal-matrix pivot {pivot:e} at column {column}")]
    SingularFit { pivot: f64, column: usize },

    #[error("invalid split: split degree {split_degree} leaves no high-degree terms below l_max {l_max}")]
    InvalidSplit { split_degree: usize, l_max: usize },

    #[error("degenerate batch: all {0} regularizer positions failed to fit")]
    DegenerateBatch(usize),

    #[error("config: {0}")]
    Config(String),

    #[error("format: {0}")]
    Format(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("empty split: dataset has no {0} views")]
    EmptySplit(&'static str),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Short machine-parsable tag used by the command-line front end.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid-input",
            Error::UnderDetermined { .. } => "under-determined",
            Error::SingularFit { .. } => "singular-fit",
            Error::InvalidSplit { .. } => "invalid-split",
            Error::DegenerateBatch(_) => "degenerate-batch",
            Error::Config(_) => "config",
            Error::Format(_) => "format",
            Error::Io { .. } => "io",
            Error::EmptySplit(_) => "empty-split",
        }
    }
}
