use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("unknown {what} `{name}` (available: {available})")]
    Unknown {
        what: &'static str,
        name: String,
        available: String,
    },

    #[error("point does not lie on piece {piece} (residual {residual:.3e})")]
    NotOnPiece { piece: usize, residual: f64 },

    #[error("missing field value: {0}")]
    MissingValue(String),

    #[error("memory estimate {needed} bytes exceeds cap {cap} bytes")]
    MemoryCap { needed: usize, cap: usize },

    #[error("quadrature resolution {resolution} too low: node spacing {spacing:.3e} must be below {limit:.3e}")]
    Resolution {
        resolution: usize,
        spacing: f64,
        limit: f64,
    },

    #[error("fit rejected: {0}")]
    Fit(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    /// Short machine-readable tag, used by the command-line front end.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::Unknown { .. } => "unknown_name",
            Error::NotOnPiece { .. } => "not_on_piece",
            Error::MissingValue(_) => "missing_value",
            Error::MemoryCap { .. } => "memory_cap",
            Error::Resolution { .. } => "resolution",
            Error::Fit(_) => "fit",
            Error::Numerical(_) => "numerical",
            Error::Insufficient(_) => "insufficient_data",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }

    /// True for failures of the computation itself rather than of its inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Numerical(_) | Error::Fit(_) | Error::MemoryCap { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
