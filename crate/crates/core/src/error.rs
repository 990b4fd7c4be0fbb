use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("bit sequence length {len} is not a multiple of {bits_per_symbol}")]
    BitLength { len: usize, bits_per_symbol: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invariant violation: {0}")]
    Invariant(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("corrupt dataset: {0}")]
    Corrupt(String),

    #[error("unsupported format version {found:?} (expected {expected:?})")]
    Version { found: String, expected: String },

    #[error("{}:{line}: malformed JSON: {msg}", file.display())]
    Json {
        file: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{location}: schema violation at `{field}`: {msg}")]
    Schema {
        location: String,
        field: String,
        msg: String,
    },

    #[error("training failed: {0}")]
    Training(String),

    #[error("training diverged (non-finite loss at epoch {epoch}); retry with a smaller learning rate")]
    Divergence { epoch: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn schema(location: impl Into<String>, field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Schema {
            location: location.into(),
            field: field.into(),
            msg: msg.into(),
        }
    }
}
