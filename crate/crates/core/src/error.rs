use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid data: {0}")]
    Validation(String),

    #[error("cannot normalize column {column}: {reason}")]
    Normalization { column: usize, reason: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid modification: {0}")]
    Precondition(String),

    #[error("modification leaves an empty problem: {0}")]
    Domain(String),

    #[error("bound assumption violated: {0}")]
    Assumption(String),

    #[error("specialized routine not applicable: {0}")]
    Specialization(String),

    #[error(
        "solver did not reach the requested relative gap within {iterations} iterations \
         (best relative gap {best_relative_gap:.3e})"
    )]
    Convergence {
        iterations: usize,
        best_relative_gap: f64,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training failed for {context}: {source}")]
    Training {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Stable numeric code used by the command line front end.
    pub fn code(&self) -> i32 {
        match self {
            Error::Io { .. } => 10,
            Error::Parse { .. } => 11,
            Error::Validation(_) => 12,
            Error::Normalization { .. } => 13,
            Error::Dimension(_) => 14,
            Error::Precondition(_) => 15,
            Error::Domain(_) => 16,
            Error::Assumption(_) => 17,
            Error::Specialization(_) => 18,
            Error::Convergence { .. } => 19,
            Error::Config(_) => 20,
            Error::Training { source, .. } => source.code(),
        }
    }
}
