use thiserror::Error;

/// Broad failure class, used by frontends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Invalid arguments or configuration.
    Usage,
    /// Malformed, missing or inconsistent input data.
    Data,
    /// A numerical routine failed.
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("bad magic")]
    BadMagic,

    #[error("unsupported version {found} (reader supports {supported})")]
    Version { found: u32, supported: u32 },

    #[error("truncated input: {0}")]
    Truncated(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("instance too large for exhaustive oracle: n={n} exceeds cap {cap}")]
    OracleCap { n: usize, cap: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidArgument(_) | Error::OracleCap { .. } => ErrorClass::Usage,
            Error::Numerical(_) => ErrorClass::Numeric,
            Error::Dimension(_)
            | Error::EmptyDataset
            | Error::BadMagic
            | Error::Version { .. }
            | Error::Truncated(_)
            | Error::Parse { .. }
            | Error::Io(_) => ErrorClass::Data,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
