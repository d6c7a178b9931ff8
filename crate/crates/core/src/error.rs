use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input {input} is constant on the training data (min = max = {value})")]
    ConstantFeature { input: usize, value: f64 },

    #[error("sum of firing levels underflowed to zero")]
    DegenerateFiring,

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("parameter count for M={inputs}, Mm={mfs} overflows usize")]
    ParamCountOverflow { inputs: usize, mfs: usize },

    #[error("batch is empty")]
    EmptyBatch,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("training set is empty")]
    EmptyTrainingSet,

    #[error("expected {expected} drop masks, got {actual}")]
    MaskShapeMismatch { expected: usize, actual: usize },

    #[error("non-finite gradient at coordinate {index}: {value}")]
    NonFiniteGradient { index: usize, value: f64 },

    #[error("baseline value is zero at iteration {0}")]
    ZeroBaseline(usize),

    #[error("normal equations are singular")]
    SingularSystem,

    #[error("dimension mismatch: model has {expected} inputs, data has {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("schema mismatch: preprocessor fitted on {expected} columns, data has {actual}")]
    SchemaMismatch { expected: usize, actual: usize },

    #[error("dataset has {0} rows; at least 2 are needed to split")]
    TooSmall(usize),

    #[error("parse error at row {row}, column '{column}': cannot read {value:?} as a number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("target column {0} not found")]
    MissingTarget(String),

    #[error("target column '{0}' is not numeric")]
    NonNumericTarget(String),

    #[error("grid of {rules} rules exceeds the limit of {limit}")]
    GridTooLarge { rules: usize, limit: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
