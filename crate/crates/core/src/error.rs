use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid mesh: {0}")]
    Validation(String),

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("eigensolver did not converge: {0}")]
    Convergence(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("function has (near) zero norm")]
    ZeroFunction,

    #[error("rank deficient: {0}")]
    Rank(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("no vertices survive the cut")]
    EmptyResult,

    #[error("basis has no eigenvalues")]
    MissingEigenvalues,

    #[error("non-finite gradient: {0}")]
    NonFiniteGradient(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    /// Variant name, used in report rows.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "IoError",
            Error::Parse { .. } => "ParseError",
            Error::Validation(_) => "ValidationError",
            Error::UnsupportedFormat(_) => "UnsupportedFormat",
            Error::DegenerateGeometry(_) => "DegenerateGeometry",
            Error::Convergence(_) => "ConvergenceError",
            Error::Dimension(_) => "DimensionError",
            Error::ZeroFunction => "ZeroFunction",
            Error::Rank(_) => "RankError",
            Error::Index(_) => "IndexError",
            Error::EmptyResult => "EmptyResult",
            Error::MissingEigenvalues => "MissingEigenvalues",
            Error::NonFiniteGradient(_) => "NonFiniteGradient",
            Error::Config(_) => "ConfigError",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
