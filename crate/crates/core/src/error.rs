use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures while decoding one of the on-disk formats.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic bytes {found:?}, expected {expected:?}")]
    BadMagic { expected: &'static str, found: Vec<u8> },
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("value {value} at index {index} is outside [0, 1]")]
    OutOfRange { index: usize, value: f32 },
    #[error("value at index {index} is NaN or infinite")]
    NonFinite { index: usize },
    #[error("not a binary PGM (P5) file")]
    NotP5,
    #[error("malformed PGM header: {0}")]
    BadHeader(String),
    #[error("image dimensions {height}x{width} overflow")]
    DimensionOverflow { height: u64, width: u64 },
    #[error("truncated raster: expected {expected} bytes, found {found}")]
    TruncatedRaster { expected: usize, found: usize },
    #[error("invalid manifest: {0}")]
    Manifest(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("probability {value} at index {index} is outside [0, 1]")]
    ProbabilityOutOfRange { index: usize, value: f64 },
    #[error("probability at index {index} is NaN or infinite")]
    NonFiniteProbability { index: usize },
    #[error("grid dimensions must be at least 1x1, got {height}x{width}")]
    EmptyGrid { height: usize, width: usize },
    #[error("expected {expected} values for the grid, got {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("lambda {0} is outside [0, 1]")]
    InvalidLambda(f64),
    #[error("risk level {0} is outside (0, 1]")]
    InvalidRiskLevel(f64),
    #[error("invalid lambda grid: {0}")]
    InvalidGrid(String),
    #[error("record sequence is empty")]
    EmptyRecords,
    #[error("calibration infeasible: minimal achievable risk {min_risk} needs alpha >= {min_feasible_alpha}")]
    CalibrationInfeasible { min_feasible_alpha: f64, min_risk: f64 },
    #[error("sequences have different lengths ({0} vs {1})")]
    SequenceLengthMismatch(usize, usize),
    #[error("need at least two observations, got {0}")]
    TooFewObservations(usize),
    #[error("sequence has zero variance")]
    ZeroVariance,
    #[error("split ratio {ratio} leaves an empty side for {n} records")]
    InvalidSplit { ratio: f64, n: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{path}: {source}")]
    Format {
        path: PathBuf,
        #[source]
        source: FormatError,
    },
    #[error("report violates the risk-control precondition at lambda {lambda_hat}")]
    PreconditionViolated { lambda_hat: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn format(path: impl Into<PathBuf>, source: FormatError) -> Self {
        Error::Format {
            path: path.into(),
            source,
        }
    }
}
