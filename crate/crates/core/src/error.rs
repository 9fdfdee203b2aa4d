use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
///
/// Variants split into two families: data/input problems and numerical
/// failures. [`Error::is_numerical`] tells them apart (the CLI maps them to
/// different exit codes).
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("non-numeric cell at row {row}, column '{column}': {value:?}")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("non-binary outcome at row {row}: {value}")]
    NonBinaryOutcome { row: usize, value: f64 },
    #[error("duplicate column name '{0}'")]
    DuplicateColumn(String),
    #[error("n_rows < 2 (got {0})")]
    TooFewRows(usize),
    #[error("unknown column '{0}'")]
    UnknownColumn(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("insufficient sample: {0}")]
    InsufficientSample(String),
    #[error("nothing to summarize")]
    NothingToSummarize,

    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("degenerate denominator: {0}")]
    DegenerateDenominator(String),
    #[error("degenerate density: {0}")]
    DegenerateDensity(String),
    #[error("rank deficiency: {0}")]
    RankDeficient(String),
    #[error("matrix not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("separation detected: {0}")]
    Separation(String),
    #[error("optimizer failed: {0}")]
    OptimizerFailed(String),
}

impl Error {
    /// True for failures of the numerical machinery rather than of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_)
                | Error::DegenerateDenominator(_)
                | Error::DegenerateDensity(_)
                | Error::RankDeficient(_)
                | Error::NotPositiveDefinite(_)
                | Error::Separation(_)
                | Error::OptimizerFailed(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
