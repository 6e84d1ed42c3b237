use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("non-finite feature at row {row}, column {col}")]
    NonFiniteFeature { row: usize, col: usize },

    #[error("label {label} out of range for K={k} at row {row}")]
    LabelOutOfRange { row: usize, label: usize, k: usize },

    #[error("parse error at row {row}, column `{column}`: {value:?}")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("dataset needs at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },

    #[error("clean labels are required for this operation")]
    MissingCleanLabels,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("row sum of row {row} is {sum}, expected 1")]
    RowSum { row: usize, sum: f64 },

    #[error("negative entry {value} at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize, value: f64 },

    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("all feature directions have zero variance")]
    ZeroVariance,

    #[error("degenerate vector under W (weighted norm {0})")]
    DegenerateVector(f64),

    #[error("W is not symmetric (|W_ij - W_ji| = {0})")]
    AsymmetricWeights(f64),

    #[error("divergence {0:?} has no estimator")]
    UnsupportedDivergence(crate::infotheory::FDivergenceKind),

    #[error("invalid noise rates e1={e1}, e2={e2}: {reason}")]
    InvalidNoiseRates {
        e1: f64,
        e2: f64,
        reason: &'static str,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("could not draw a diagonally dominant row after {0} attempts")]
    NotDiagonallyDominant(usize),

    #[error("training labels contain a single class")]
    SingleClass,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
