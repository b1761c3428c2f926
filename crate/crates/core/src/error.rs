use std::path::PathBuf;

use thiserror::Error;

/// Errors raised for rejected inputs, malformed files and I/O.
///
/// Expected negative outcomes of the pipeline (a skipped keyframe, a failed
/// vote) are not errors; they are returned as dedicated outcome types.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input `{field}`: {reason}")]
    InvalidInput { field: &'static str, reason: String },

    #[error("point lies behind the camera (z = {z})")]
    BehindCamera { z: f64 },

    #[error("malformed map database, field `{field}`: {reason}")]
    Format { field: &'static str, reason: String },

    #[error("invalid configuration `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("pose graph has no absolute edge or fixed node; its gauge is unconstrained")]
    GaugeFree,

    #[error("normal equations are singular: {0}")]
    Singular(String),

    #[error("alignment is degenerate: {0}")]
    Degenerate(String),

    #[error("metric is undefined: {0}")]
    Undefined(&'static str),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {path}: {reason}")]
    Parse { path: PathBuf, reason: String },
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidInput {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag, used by the CLI error record.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput { .. } => "invalid_input",
            Error::BehindCamera { .. } => "behind_camera",
            Error::Format { .. } => "format",
            Error::Config { .. } => "config",
            Error::GaugeFree => "gauge_free",
            Error::Singular(_) => "singular",
            Error::Degenerate(_) => "degenerate",
            Error::Undefined(_) => "undefined",
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
