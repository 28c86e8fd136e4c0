use std::fmt;

use thiserror::Error;

/// A parse failure with the offending input and a byte offset into it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub input: String,
    pub position: usize,
    pub message: String,
}

impl ParseError {
    pub(crate) fn new(input: &str, position: usize, message: impl Into<String>) -> Self {
        Self {
            input: input.to_string(),
            position,
            message: message.into(),
        }
    }

    /// The input line with a caret under the failing position.
    pub fn caret(&self) -> String {
        let col = self.input[..self.position.min(self.input.len())].chars().count();
        format!("  {}\n  {}^", self.input, " ".repeat(col))
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at position {}\n{}", self.message, self.position, self.caret())
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Error)]
pub enum Error {
    #[error("group mismatch: {0}")]
    GroupMismatch(String),

    #[error("invalid group: {0}")]
    InvalidGroup(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("element {element} is not expressible at this level: {reason}")]
    NotExpressible { element: String, reason: String },

    #[error("level degree overflow: {0}")]
    DegreeOverflow(String),

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("non-homomorphic table: {0}")]
    NonHomomorphic(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("parse error: {0}")]
    Parse(#[from] ParseError),

    #[error("invalid field `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("guard `{guard}` exceeded: {message}")]
    Budget { guard: String, message: String },

    #[error("eigensolver did not converge (residual {residual:e})")]
    Eigen { residual: f64 },

    #[error("insufficient levels: {0}")]
    InsufficientLevels(String),

    #[error("window does not cover {0}")]
    InsufficientWindow(String),

    #[error("coefficient {0} is not representable in floating point")]
    Overflow(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serialize(String),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn budget(guard: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Budget {
            guard: guard.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by the input rather than by a resource guard.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Budget { .. } | Error::Eigen { .. } | Error::Io { .. } | Error::Serialize(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
