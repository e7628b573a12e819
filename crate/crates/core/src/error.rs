use thiserror::Error;

/// Errors produced by the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid flux point #{index} at ({x}, {y}): {reason}")]
    InvalidPoint {
        index: usize,
        x: f64,
        y: f64,
        reason: String,
    },

    #[error("cell ({0}, {1}) is outside the box")]
    CellOutsideBox(i64, i64),

    #[error("evaluation at flux point #{0}")]
    AtFluxPoint(usize),

    #[error("segment passes through flux point #{0}")]
    SegmentThroughFlux(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("dimension {dim} exceeds the dense limit {limit}")]
    TooLarge { dim: usize, limit: usize },

    #[error("configuration would materialize {points} points (limit {limit})")]
    TooManyPoints { points: usize, limit: usize },

    #[error("eigensolver did not converge after {iterations} iterations (best residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("quadrature tolerance {target:e} unreachable (achieved {achieved:e})")]
    QuadratureTolerance { target: f64, achieved: f64 },

    #[error("no admissible schedule: {0}")]
    Schedule(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("{failed} of {total} samples failed (limit 1%)")]
    TooManyFailures { failed: usize, total: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad input rather than by a computation.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Json(_) | Error::InvalidParameter(_) | Error::InvalidPoint { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
