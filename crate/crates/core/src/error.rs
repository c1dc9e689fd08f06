//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by data ingestion, rule construction, optimization, and
/// estimation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    ParseError {
        row: usize,
        column: String,
        value: String,
    },
    #[error("dataset has no rows")]
    EmptyDataset,
    #[error("burn-in size {size} exceeds {limit}")]
    BurnInTooLarge { size: usize, limit: usize },
    #[error("burn-in size {size} is too small; need at least {needed}")]
    BurnInTooSmall { size: usize, needed: usize },
    #[error("probability floor {floor} with n={n} cannot meet budget {n_b}")]
    InfeasibleBudget { floor: f64, n: usize, n_b: usize },
    #[error("all raw sampling weights are zero")]
    AllZeroWeights,
    #[error("rho {0} is outside [0, 1]")]
    RhoOutOfRange(f64),
    #[error("k={k} exceeds the {available} available burn-in rows")]
    KTooLarge { k: usize, available: usize },
    #[error("burn-in set is empty")]
    EmptyBurnIn,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("Hessian is singular or near-singular (condition number {0:.3e})")]
    SingularHessian(f64),
    #[error("normal equations are singular")]
    SingularSystem,
    #[error("solver did not converge after {iterations} iterations (gradient norm {grad_norm:.3e})")]
    NoConvergence { iterations: usize, grad_norm: f64 },
    #[error("sampled rows are missing labels: {rows:?}")]
    MissingLabelAtSampledUnit { rows: Vec<usize> },
    #[error("variance estimate {0} is not positive")]
    NonpositiveVariance(f64),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid configuration: {0}")]
    ConfigError(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
