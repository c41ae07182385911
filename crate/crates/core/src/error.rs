use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numerical overflow at cycle {cycle}: {detail}")]
    NumericalOverflow { cycle: f64, detail: String },

    #[error("ill-conditioned covariance: {0}")]
    Conditioning(String),

    #[error("chain initialization failed: {0}")]
    Initialization(String),

    #[error("all input variables are excluded from selection")]
    ExhaustedVariables,

    #[error("sizing error: {0}")]
    Sizing(String),

    #[error("quadrature did not reach tolerance: {0}")]
    Tolerance(String),

    #[error("row {row}: {source}")]
    Row {
        row: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("chain {chain}: {source}")]
    Chain {
        chain: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by user input (bad config, unreadable or malformed files).
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Parse { .. } | Error::Io { .. } | Error::Serde(_)
        )
    }
}
