//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("row {row}, column {column}: cannot parse {value:?} as a number")]
    NonNumericCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}, column {column}: value is not finite")]
    NonFiniteValue { row: usize, column: String },

    #[error("column {column} matched by more than one schema role")]
    DuplicateRole { column: String },

    #[error("schema matched no {role} column")]
    MissingRole { role: &'static str },

    #[error("dataset has {0} rows; at least 2 are required")]
    TooFewRows(usize),

    #[error("column {column} has zero variance; cannot standardize")]
    ZeroVariance { column: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("bandwidth must be strictly positive, got {0}")]
    InvalidBandwidth(f64),

    #[error("polynomial degree must be at least 1")]
    InvalidDegree,

    #[error("exponential kernel input has norm {norm:.3} > 30; standardize the data first")]
    KernelInputTooLarge { norm: f64 },

    #[error("all points are identical; median pairwise distance is zero")]
    AllPointsIdentical,

    #[error("shuffle rounds must be at least 1")]
    InvalidShuffleRounds,

    #[error("marginal-product target needs n <= {limit}, got {n}; use the shuffle target instead")]
    MarginalProductTooLarge { n: usize, limit: usize },

    #[error("target sample is empty")]
    EmptyTarget,

    #[error("target masses sum to {sum}; expected 1")]
    BadTargetMasses { sum: f64 },

    #[error("cap {cap} is infeasible for {n} points: n*cap/n must cover total mass 1")]
    InfeasibleCap { cap: f64, n: usize },

    #[error("quadratic form is not positive semidefinite (smallest eigenvalue about {lambda_min:.3e})")]
    NonPsdForm { lambda_min: f64 },

    #[error("squared MMD evaluated to {value:.3e}, more negative than the -1e-8 rounding tolerance")]
    NegativeSquaredMmd { value: f64 },

    #[error("transport plan violates a column marginal: column {column} sums to {got}, expected {expected}")]
    MarginalViolation {
        column: usize,
        got: f64,
        expected: f64,
    },

    #[error("transport plan of {n} x {m} entries exceeds the {limit}-entry guard")]
    PlanTooLarge { n: usize, m: usize, limit: usize },

    #[error("regularization strength must be nonnegative, got {0}")]
    NegativeLambda(f64),

    #[error("cap must be at least 1, got {0}")]
    CapBelowOne(f64),

    #[error("recovered raw weights sum to {sum}; deviates from 1 by more than {tolerance}")]
    RawSumDeviation { sum: f64, tolerance: f64 },

    #[error("dual support of {size} points exceeds the {limit}-point guard")]
    SupportTooLarge { size: usize, limit: usize },

    #[error("weighted design matrix is rank deficient (condition number about {cond:.3e})")]
    RankDeficient { cond: f64 },

    #[error("dataset has no outcome column; regression needs one")]
    MissingOutcomes,

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("config file {path}, line {line}: {msg}")]
    ConfigParse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("{0}")]
    InvalidArgument(String),
}
