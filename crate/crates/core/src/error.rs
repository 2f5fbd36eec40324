use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration or spec value is invalid; `field` names the offending key.
    #[error("invalid configuration `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("OPA violated on subcarrier {subcarrier}: {count} users with positive power")]
    Opa { subcarrier: usize, count: usize },

    #[error("{0}")]
    Usage(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config { field: field.into(), reason: reason.into() }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit status for the CLI: 3 for I/O failures, 2 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Io { .. } | Error::Csv(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
