use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("class count must be at least 3, got {0}")]
    InvalidClassCount(usize),

    #[error("invalid code matrix: {0}")]
    InvalidCodeMatrix(String),

    #[error("sparse random code generation failed: no valid candidate for seed {seed}")]
    GenerationFailed { seed: u64 },

    #[error("probability {0} is outside [0, 1]")]
    InvalidProbability(f64),

    #[error("aggregation weight {index} is negative ({value})")]
    InvalidWeights { index: usize, value: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("label {label} is out of range for {classes} classes")]
    InvalidLabel { label: usize, classes: usize },

    #[error("non-finite value encountered while evaluating {0}")]
    NumericOverflow(&'static str),

    #[error("binary problem for code-matrix row {row} has examples of only one side")]
    DegenerateBinaryProblem { row: usize },

    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },

    #[error("{}:{line}: value {value} in column {column} is outside [0, 1]", path.display())]
    ValueOutOfRange { path: PathBuf, line: usize, column: usize, value: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("Newton system is numerically singular at iteration {iteration}")]
    SolverBreakdown { iteration: usize },

    #[error("invalid bound parameter: {0}")]
    InvalidBoundParameter(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dataset: {0}")]
    InvalidDataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
