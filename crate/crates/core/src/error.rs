use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("truncated record at byte offset {offset}: {remaining} trailing bytes")]
    Truncated { offset: usize, remaining: usize },

    #[error("malformed record at byte offset {offset}: x={x}, y={y} outside 34x34 sensor")]
    MalformedRecord { offset: usize, x: u8, y: u8 },

    #[error("format error: {0}")]
    Format(String),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("shape mismatch at layer {layer}: expected {expected:?}, found {found:?}")]
    Shape {
        layer: usize,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("training diverged at epoch {epoch}: {reason}")]
    Diverged { epoch: usize, reason: String },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure category, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Data,
    Numeric,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Argument(_) | Error::Dimension { .. } | Error::Shape { .. } => {
                ErrorKind::Validation
            }
            Error::Numeric(_) | Error::Diverged { .. } => ErrorKind::Numeric,
            Error::Truncated { .. }
            | Error::MalformedRecord { .. }
            | Error::Format(_)
            | Error::Integrity(_)
            | Error::Io(_)
            | Error::Json(_)
            | Error::Csv(_) => ErrorKind::Data,
        }
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
        if expected == found {
            Ok(())
        } else {
            Err(Error::Dimension {
                context,
                expected,
                found,
            })
        }
    }
}
