use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the domain of a special function or physical formula.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid mesh: {0}")]
    Mesh(String),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("matrix is singular at pivot {pivot}")]
    Singular { pivot: usize },

    #[error("matrix is ill-conditioned (estimated condition number {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("normal equations are not positive definite (lambda = {lambda:.3e})")]
    NotPositiveDefinite { lambda: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("series did not converge within {terms} terms")]
    NonConvergence { terms: usize },

    #[error("invalid noise request: {0}")]
    Noise(String),

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("checksum mismatch in {0}")]
    Checksum(String),

    #[error("unsupported format version {found} (this build reads version {supported})")]
    Version { found: u32, supported: u32 },

    #[error("geometry digest mismatch: dataset {dataset}, configuration {expected}")]
    DigestMismatch { dataset: String, expected: String },

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }
}
