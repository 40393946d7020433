use thiserror::Error;

use crate::model::Violation;

/// Errors surfaced by the solvers and the file formats.
#[derive(Debug, Error)]
pub enum CspError {
    #[error("invalid instance: {}", join_violations(.0))]
    InvalidInstance(Vec<Violation>),

    /// An algorithm was invoked outside the regime it is defined for.
    #[error("{algorithm} precondition violated: {reason}")]
    Precondition {
        algorithm: &'static str,
        reason: String,
    },

    /// A configured enumeration or memory cap would be exceeded.
    #[error("{what}: required {required} exceeds cap {cap}")]
    Resource {
        what: &'static str,
        required: f64,
        cap: f64,
    },

    #[error("unknown identifier: {0}")]
    UnknownId(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = CspError> = std::result::Result<T, E>;

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

impl CspError {
    pub(crate) fn precondition(algorithm: &'static str, reason: impl Into<String>) -> Self {
        CspError::Precondition {
            algorithm,
            reason: reason.into(),
        }
    }

    pub(crate) fn resource(what: &'static str, required: f64, cap: f64) -> Self {
        CspError::Resource {
            what,
            required,
            cap,
        }
    }
}
