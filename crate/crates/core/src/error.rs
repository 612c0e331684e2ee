use std::path::PathBuf;

use crate::surface::GraphSurface;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value for `{0}`")]
    NonFinite(&'static str),

    #[error("fiber dimension {fiber} does not match ambient dimension {n} (expected n - 1)")]
    DimensionMismatch { n: usize, fiber: usize },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("surface left the graph chart (max |rho - mean| = {max_deviation:.6} >= pi)")]
    ChartExit { max_deviation: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        best: Option<Box<GraphSurface>>,
    },

    #[error("bordered Jacobian is singular or the linear solve stagnated (relative residual {residual:.3e})")]
    JacobianSingular { residual: f64 },

    #[error("surface is not weighted minimal: max |H~| = {residual:.3e} exceeds {threshold:.1e}")]
    NotMinimal { residual: f64, threshold: f64 },

    #[error("nonpositive leaf speed {value:.3e} on leaf t = {t}")]
    NonpositiveSpeed { t: f64, value: f64 },

    #[error("leaf solve failed at t = {t}: {source}")]
    Leaf {
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn ensure_finite(value: f64, name: &'static str) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(name))
    }
}
