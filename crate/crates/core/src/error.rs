use std::path::PathBuf;

/// Errors raised anywhere in the knee-motion pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("{path}: row {row}: {reason}")]
    Csv { path: PathBuf, row: usize, reason: String },

    #[error("{context}: {reason}")]
    Format { context: String, reason: String },

    #[error("degenerate trial: {0}")]
    DegenerateTrial(String),

    #[error("rank-deficient least-squares problem ({context}): rank {rank} < {required}")]
    RankDeficient {
        context: String,
        rank: usize,
        required: usize,
    },

    #[error("time range [{start}, {end}] outside trial span [{span_start}, {span_end}]")]
    OutOfSpan {
        start: f64,
        end: f64,
        span_start: f64,
        span_end: f64,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn param(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    ///
    /// 1 is reserved for usage errors, which are raised by argument parsing
    /// before any of these variants can occur.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::RankDeficient { .. } | Error::Numerical(_) => 3,
            _ => 2,
        }
    }

    /// Prefixes the error message with the trial or stage it came from.
    pub fn context(self, what: impl std::fmt::Display) -> Self {
        match self {
            Error::DegenerateTrial(msg) => Error::DegenerateTrial(format!("{what}: {msg}")),
            Error::Numerical(msg) => Error::Numerical(format!("{what}: {msg}")),
            Error::RankDeficient {
                context,
                rank,
                required,
            } => Error::RankDeficient {
                context: format!("{what}: {context}"),
                rank,
                required,
            },
            Error::InvalidParameter { field, reason } => Error::InvalidParameter {
                field,
                reason: format!("{reason} ({what})"),
            },
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
