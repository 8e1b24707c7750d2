use thiserror::Error;

/// Errors raised by dataset handling, inference routines and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("csv parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("inconsistent column count at row {row}: expected {expected}, found {found}")]
    InconsistentColumns {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("input contains no data rows")]
    EmptyInput,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is singular or not positive definite: {0}")]
    Singular(String),

    #[error("degenerate quantity: {0}")]
    Degenerate(String),

    #[error("dataset is already standardized")]
    AlreadyStandardized,

    #[error("variational parameters are not integrable: {0}")]
    NotIntegrable(String),

    #[error("labels contain a single class")]
    SingleClass,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable identifier used in machine-readable error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::InconsistentColumns { .. } => "inconsistent_columns",
            Error::EmptyInput => "empty_input",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Singular(_) => "singular",
            Error::Degenerate(_) => "degenerate",
            Error::AlreadyStandardized => "already_standardized",
            Error::NotIntegrable(_) => "not_integrable",
            Error::SingleClass => "single_class",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidArgument(msg()))
    }
}
