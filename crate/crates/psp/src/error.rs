use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors from files, configuration, and the core engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] psp_core::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {kind}", path.display())]
    Format { path: PathBuf, kind: FormatError },
    #[error("config: {0}")]
    Config(String),
}

/// Why a file could not be parsed.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatError {
    #[error("bad magic bytes {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    Version(u16),
    #[error("malformed header: {0}")]
    Header(String),
    #[error("truncated: need {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("{0} unexpected bytes after the checksum")]
    Trailing(u64),
    #[error("invalid content: {0}")]
    Content(String),
    #[error("line {line}: {msg}")]
    Text { line: usize, msg: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, kind: FormatError) -> Self {
        Error::Format {
            path: path.into(),
            kind,
        }
    }

    /// The parse failure, if this is one.
    pub fn format_kind(&self) -> Option<&FormatError> {
        match self {
            Error::Format { kind, .. } => Some(kind),
            _ => None,
        }
    }
}
