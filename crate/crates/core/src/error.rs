use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the planner, the bound evaluators and the verifier.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the mathematical domain of an operation.
    #[error("domain error in {op}: {msg}")]
    Domain { op: &'static str, msg: String },

    /// A field failed validation.
    #[error("invalid value for `{field}`: {msg}")]
    InvalidField { field: String, msg: String },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// An iterative method failed; `diagnostics` carries the last state.
    #[error("numeric failure in {op}: {msg} ({diagnostics})")]
    Numeric {
        op: &'static str,
        msg: String,
        diagnostics: String,
    },

    #[error("problem is infeasible: {0}")]
    Infeasible(String),

    #[error("parse error in {path}: {msg}")]
    Parse { path: String, msg: String },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Domain {
            op,
            msg: msg.into(),
        }
    }

    pub(crate) fn field(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::InvalidField {
            field: field.into(),
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the CLI for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Infeasible(_) => 2,
            Error::InvalidField { .. } | Error::Parse { .. } | Error::Io { .. } => 3,
            Error::DimensionMismatch { .. } => 3,
            Error::Domain { .. } | Error::DegenerateFit(_) | Error::Numeric { .. } => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
