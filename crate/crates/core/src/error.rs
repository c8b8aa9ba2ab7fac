use std::fmt;
use std::path::PathBuf;

/// Why a decision vector was rejected.
#[derive(Debug, Clone, PartialEq)]
pub enum ProbabilityViolation {
    Empty,
    NonFinite { index: usize },
    OutOfRange { index: usize, value: f64 },
    SumMismatch { sum: f64, tolerance: f64 },
}

impl fmt::Display for ProbabilityViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Empty => write!(f, "decision vector is empty"),
            Self::NonFinite { index } => write!(f, "entry {index} is not finite"),
            Self::OutOfRange { index, value } => {
                write!(f, "entry {index} = {value} is outside [0, 1]")
            }
            Self::SumMismatch { sum, tolerance } => write!(
                f,
                "entries sum to {sum} (off by {:e}, tolerance {tolerance:e})",
                (sum - 1.0).abs()
            ),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FusionError {
    #[error("invalid class schema: {0}")]
    Schema(String),

    #[error("invalid decision vector: {0}")]
    Probability(ProbabilityViolation),

    #[error("cannot renormalize a vector whose entries sum to zero")]
    ZeroMass,

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    Dimension {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("invalid cost matrix: {0}")]
    CostMatrix(String),

    #[error("invalid weights: {0}")]
    Weights(String),

    #[error("class index {index} out of range for {m} classes")]
    ClassIndex { index: usize, m: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },

    #[error("{path}:{line}: {message}")]
    Line { path: PathBuf, line: u64, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<ProbabilityViolation> for FusionError {
    fn from(v: ProbabilityViolation) -> Self {
        FusionError::Probability(v)
    }
}

pub type Result<T, E = FusionError> = std::result::Result<T, E>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> FusionError {
    let path = path.into();
    move |source| FusionError::Io { path, source }
}

pub(crate) fn check_dim(expected: usize, actual: usize, context: &'static str) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(FusionError::Dimension {
            expected,
            actual,
            context,
        })
    }
}
