//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A configuration value is missing, malformed, or out of range.
    #[error("configuration error: {0}")]
    Config(String),

    /// The episode horizon has been reached; no further steps are legal.
    #[error("episode finished: t = {t} >= horizon {horizon}")]
    EpisodeFinished { t: usize, horizon: usize },

    /// Arity mismatch between a network and the data fed to it.
    #[error("wiring error: {0}")]
    Wiring(String),

    /// A genome violates a structural invariant (should be unreachable).
    #[error("invalid genome: {0}")]
    InvalidGenome(String),

    /// An operation was given an empty input it cannot handle.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// A non-finite value showed up where the math requires finite numbers.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Dataset or record-level problem (too small, bad arity, bad provenance).
    #[error("data error: {0}")]
    Data(String),

    /// An API was called out of contract (e.g. backward without a cache).
    #[error("usage error: {0}")]
    Usage(String),

    /// Objective evaluation failed for a specific genome.
    #[error("evaluation of genome {genome_id} failed: {source}")]
    Evaluation {
        genome_id: u64,
        #[source]
        source: Box<Error>,
    },

    /// I/O failure, with the path that triggered it.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed JSON in a checkpoint or experience file.
    #[error("json error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
