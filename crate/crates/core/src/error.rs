use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are incompatible for the requested operation.
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    /// A documented precondition was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Malformed binary or JSON file.
    #[error("{}: bad {field} at offset {offset}: expected {expected}, found {found}", path.display())]
    Format {
        path: PathBuf,
        field: &'static str,
        offset: u64,
        expected: String,
        found: String,
    },

    #[error("{}: unsupported format version {found} (supported: {supported})", path.display())]
    Version {
        path: PathBuf,
        found: u32,
        supported: u32,
    },

    /// Well-formed but semantically invalid input data.
    #[error("invalid input: {0}")]
    Input(String),

    /// Training produced a non-finite loss term.
    #[error("non-finite {term} loss at epoch {epoch}")]
    NonFinite { term: &'static str, epoch: usize },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable process exit code for each error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Input(_) => 3,
            Error::Io { .. } => 3,
            Error::Format { .. } => 4,
            Error::Version { .. } => 5,
            Error::Dimension { .. } => 6,
            Error::Contract(_) => 7,
            Error::NonFinite { .. } => 8,
        }
    }
}
