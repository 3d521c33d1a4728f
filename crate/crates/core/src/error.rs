use thiserror::Error;

/// Errors raised anywhere in the library.
///
/// Every variant maps onto a short machine-readable category through
/// [`Error::category`], which the command-line front end uses for its
/// exit status and error report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("line {line}: parse error: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: validation error: {message}")]
    Validation { line: usize, message: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("lookup error: {0}")]
    Lookup(String),

    #[error("type error: {0}")]
    Type(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn category(&self) -> &'static str {
        match self {
            Error::Dimension { .. } => "dimension",
            Error::Domain(_) => "domain",
            Error::Config(_) => "config",
            Error::Input(_) => "input",
            Error::Parse { .. } => "parse",
            Error::Validation { .. } => "validation",
            Error::EmptyDataset => "empty-dataset",
            Error::Lookup(_) => "lookup",
            Error::Type(_) => "type",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension { expected, found })
    }
}
