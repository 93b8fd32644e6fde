use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid feature map spec: {0}")]
    InvalidSpec(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("gate value {0} outside (0, 1]")]
    GateOutOfRange(f64),

    #[error("invalid model config: {0}")]
    InvalidConfig(String),

    #[error("token id {id} out of vocabulary (size {vocab_size})")]
    OutOfVocab { id: usize, vocab_size: usize },

    #[error("training diverged at step {step}: loss = {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("cache does not match model: {0}")]
    CacheMismatch(String),

    #[error("missing benchmark cell: backend {backend}, L = {window}")]
    MissingCell { backend: String, window: usize },

    #[error("malformed {what}: {detail}")]
    Parse { what: &'static str, detail: String },

    #[error("refusing to overwrite existing file {0} (use --force)")]
    Exists(PathBuf),

    #[error("{0}")]
    Usage(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Parse {
            what,
            detail: detail.into(),
        }
    }
}

pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        });
    }
    Ok(())
}
