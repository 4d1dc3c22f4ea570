//! Error type shared across the crate.

use thiserror::Error;

/// Alias for `std::result::Result` with this crate's [`Error`].
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong building datasets, selecting subsamples,
/// fitting models, or running experiments.
#[derive(Debug, Error)]
pub enum Error {
    /// Underlying I/O failure while reading or writing data.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed CSV input.
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    /// A CSV cell or header did not match the declared schema.
    #[error("invalid data in column {column:?} at row {row}: {message}")]
    InvalidData {
        /// Column name as it appears in the header.
        column: String,
        /// Zero-based data row index (header excluded).
        row: usize,
        /// What went wrong.
        message: String,
    },

    /// A dataset constructor was handed inconsistent pieces.
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    /// A level specification is unusable (zero levels, or more than
    /// `u16::MAX` distinct levels in one factor).
    #[error("invalid level specification: {0}")]
    InvalidLevels(String),

    /// A requested subsample cannot be drawn from the given dataset.
    #[error("invalid subsample request: {0}")]
    InvalidSubsample(String),

    /// Counts too large for exact integer score arithmetic.
    #[error("dataset too large for exact scoring: {0}")]
    ScoreOverflow(String),

    /// Response or design dimensions do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// An experiment configuration is self-contradictory or incomplete.
    #[error("invalid experiment configuration: {0}")]
    InvalidConfig(String),
}
