use std::path::PathBuf;

use thiserror::Error;

/// Every failure the toolkit can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("topology error: {0}")]
    Topology(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("statistics error: {0}")]
    Stats(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("rank deficient: {0}")]
    Rank(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Divergence { epoch: usize, loss: f64 },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag, stable across releases.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Format(_) => "FormatError",
            Error::Validation(_) => "ValidationError",
            Error::Io { .. } => "IoError",
            Error::Topology(_) => "TopologyError",
            Error::DegenerateGeometry(_) => "DegenerateGeometryError",
            Error::Argument(_) => "ArgumentError",
            Error::Stats(_) => "StatsError",
            Error::Shape(_) => "ShapeError",
            Error::Rank(_) => "RankError",
            Error::Config(_) => "ConfigError",
            Error::Divergence { .. } => "DivergenceError",
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Divergence { .. } | Error::Rank(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
