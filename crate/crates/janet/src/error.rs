//! Library-wide error type.

use thiserror::Error;

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All error conditions surfaced by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    // --- series ---
    #[error("series is too short: have {have} rows, need at least {need}")]
    SeriesTooShort { have: usize, need: usize },
    #[error("split too small: {side} side has {have} rows, needs at least {need}")]
    SplitTooSmall {
        side: &'static str,
        have: usize,
        need: usize,
    },
    #[error("non-positive value {value} at row {row}; log preprocessing requires strictly positive data")]
    NonPositiveValue { row: usize, value: f64 },
    #[error("window of {window} rows is larger than the series ({len} rows)")]
    WindowTooLarge { window: usize, len: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFiniteValue { row: usize, col: usize },
    #[error("series must have at least one row and one channel")]
    EmptySeries,
    #[error("label count {labels} does not match series length {len}")]
    LabelMismatch { labels: usize, len: usize },
    #[error("operation supports univariate series only; got {channels} channels")]
    MultivariateUnsupported { channels: usize },
    #[error("CSV parse error at row {row}, column {col}: {message}")]
    ParseError {
        row: usize,
        col: usize,
        message: String,
    },
    #[error("ragged CSV rows: row {row} has {found} value columns, expected {expected}")]
    RaggedRows {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("I/O error on {path}: {message}")]
    Io { path: String, message: String },

    // --- permute ---
    #[error("block size {block_size} does not divide calibration length {len}")]
    BlockSizeDoesNotDivide { block_size: usize, len: usize },
    #[error("length mismatch: permutation is over {expected} rows, series has {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("incompatible permutations: ({len_a}, b={block_a}) vs ({len_b}, b={block_b})")]
    Incompatible {
        len_a: usize,
        block_a: usize,
        len_b: usize,
        block_b: usize,
    },

    // --- forecast ---
    #[error("singular design matrix: {context}")]
    SingularDesign { context: String },
    #[error("history too short: have {have} rows, model requires {need}")]
    HistoryTooShort { have: usize, need: usize },
    #[error("insufficient windows: training split yields {have}, need at least {need}")]
    InsufficientWindows { have: usize, need: usize },

    // --- conformal ---
    #[error("k={k} out of range for {len} values")]
    KOutOfRange { k: usize, len: usize },
    #[error("empty calibration set")]
    EmptyCalibration,
    #[error("wrap exclusion removed all {removed} calibration windows")]
    WrapExcludedEmpty { removed: usize },
    #[error("negative quantile {q} for an absolute-score region")]
    NegativeQuantile { q: f64 },
    #[error("shape mismatch: expected {expected_rows}x{expected_cols}, got {rows}x{cols}")]
    ShapeMismatch {
        expected_rows: usize,
        expected_cols: usize,
        rows: usize,
        cols: usize,
    },
    #[error("epsilon {epsilon} out of range (0, 1)")]
    EpsilonOutOfRange { epsilon: f64 },
    #[error("asymmetric split {eps_plus} + {eps_minus} does not equal epsilon {epsilon}")]
    AsymmetricSplitMismatch {
        eps_plus: f64,
        eps_minus: f64,
        epsilon: f64,
    },

    // --- baselines ---
    #[error("covariance matrix is not positive semidefinite")]
    NotPositiveSemidefinite,

    // --- harness ---
    #[error("non-stationary AR(2) parameters phi1={phi1}, phi2={phi2}")]
    NonStationaryParameters { phi1: f64, phi2: f64 },
    #[error("experiment spec requires at least one simulation")]
    EmptySpec,
    #[error("invalid experiment spec: {reason}")]
    InvalidSpec { reason: String },
    #[error("simulation {sim} (seed {seed}) failed: {source}")]
    SimulationFailed {
        sim: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },
}
