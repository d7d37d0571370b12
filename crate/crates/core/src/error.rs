use std::fmt;

/// Errors raised by the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument is outside its documented domain.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// An aggregation rule is used with a topology that violates its precondition.
    #[error("{gar} requires {inequality} (got n={n}, f={f})")]
    Precondition {
        gar: &'static str,
        inequality: &'static str,
        n: usize,
        f: usize,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid state: {0}")]
    State(String),

    /// A configuration key is unknown, mistyped or violates a constraint.
    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Coarse error classification, stable across versions. Used for exit codes
/// and the C ABI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorKind {
    Parameter,
    Precondition,
    Unsupported,
    Parse,
    State,
    Config,
    Io,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Parameter(_) => ErrorKind::Parameter,
            Error::Precondition { .. } => ErrorKind::Precondition,
            Error::Unsupported(_) => ErrorKind::Unsupported,
            Error::Parse { .. } => ErrorKind::Parse,
            Error::State(_) => ErrorKind::State,
            Error::Config { .. } => ErrorKind::Config,
            Error::Io(_) => ErrorKind::Io,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: msg.into(),
        }
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ErrorKind::Parameter => "parameter",
            ErrorKind::Precondition => "precondition",
            ErrorKind::Unsupported => "unsupported",
            ErrorKind::Parse => "parse",
            ErrorKind::State => "state",
            ErrorKind::Config => "config",
            ErrorKind::Io => "io",
        };
        f.write_str(s)
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
