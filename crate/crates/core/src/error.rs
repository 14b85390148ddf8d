use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the privatization toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("column `{0}` not present in header")]
    MissingColumn(String),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("series is empty")]
    EmptySeries,

    #[error("series contains a non-finite value at index {0}")]
    NonFinite(usize),

    #[error("series is constant (zero standard deviation)")]
    ConstantSeries,

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("insufficient data: need at least {needed} observations, got {actual}")]
    InsufficientData { needed: usize, actual: usize },

    #[error("rank-deficient least-squares system")]
    RankDeficient,

    #[error("model is not stationary (spectral radius {radius:.6})")]
    Nonstationary { radius: f64 },

    #[error("attacker already predicts the sensitive series perfectly (residual spectrum mass {mass:e})")]
    PerfectPrediction { mass: f64 },

    #[error("auxiliary spectrum is identically zero")]
    ZeroDenominator,

    #[error("spectral density has zero total mass")]
    ZeroMass,

    #[error("invalid R-function: {0}")]
    InvalidRFunction(String),

    #[error(
        "spectrum too flat for a constant-shift neighborhood: sup|pi*f~ - 1| = {sup_dev:.6} \
         must exceed sqrt(delta)/(L_R*pi) = {threshold:.6}; choose a smaller delta, an R with a \
         larger Lipschitz constant, or delta = 0"
    )]
    DegenerateBudget { sup_dev: f64, threshold: f64 },

    #[error("cepstral order K = {k} exceeds N/4 = {limit} for the frequency grid")]
    Aliasing { k: usize, limit: usize },

    #[error("filter recursion overflow at index {0}")]
    Overflow(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("replicate {index} failed: {source}")]
    Replicate {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
