use thiserror::Error;

use crate::design::Design;

#[derive(Debug, Error)]
pub enum DesignError {
    #[error("action set must contain at least one action")]
    EmptySet,
    #[error("action {index} has dimension {got}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("action {index} has a non-finite coordinate")]
    NonFinite { index: usize },
    #[error("actions {first} and {second} have identical coordinates")]
    Duplicate { first: usize, second: usize },
    #[error("design refers to action id {0} which is not in the action set")]
    UnknownId(usize),
    #[error("invalid design: {0}")]
    InvalidDesign(String),
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("G-optimal solver stopped after {iterations} iterations with g = {g_value:.6} (target {target:.6})")]
    NotConverged {
        iterations: usize,
        g_value: f64,
        target: f64,
        best: Box<Design>,
    },
    #[error("least squares needs at least one row and matching lengths ({rows} rows, {targets} targets)")]
    BadLeastSquares { rows: usize, targets: usize },
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("population covariance is not symmetric PSD: {0}")]
    NotPsd(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("rejection sampling for the norm event failed after {0} draws")]
    RejectionCap(usize),
}

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("invalid policy configuration: {0}")]
    Config(String),
    #[error("design failed in phase {phase}: {source}")]
    Design {
        phase: u32,
        #[source]
        source: DesignError,
    },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("epsilon-net would need about e^{log_size:.1} points (cap {cap}); use a larger eps")]
    NetTooLarge { log_size: f64, cap: usize },
    #[error("invalid epsilon-net request: {0}")]
    NetParameter(String),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("accounting error: {0}")]
    Accounting(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error("all {0} replications failed")]
    AllFailed(usize),
}

impl HarnessError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn is_config(&self) -> bool {
        matches!(self, HarnessError::Config(_))
    }
}
