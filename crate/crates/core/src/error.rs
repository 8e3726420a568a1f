use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point {value} lies outside the unit interval")]
    Domain { value: f64 },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("spectrum exhausted: level {level} needs {needed} operator modes but the design has {available}")]
    SpectrumExhausted {
        level: u32,
        needed: usize,
        available: usize,
    },

    #[error("cross-moment matrix is ill-conditioned (tau_hat = {tau_hat:e})")]
    IllConditioned { tau_hat: f64 },

    #[error("prior family `{0}` has no conjugate closed form")]
    UnsupportedFamily(String),

    #[error("sampler initial point lies outside the prior support")]
    Initialization,

    #[error("chain accepted no proposals during {burn_in} burn-in iterations")]
    StuckChain { burn_in: usize },

    #[error("candidate puts mass {mass} on atom {atom}, which has zero prior weight")]
    AbsoluteContinuity { atom: usize, mass: f64 },

    #[error("{path}: missing or malformed header, expected `y,x,w`")]
    MissingHeader { path: PathBuf },

    #[error("{path}: file contains no data rows")]
    EmptyFile { path: PathBuf },

    #[error("{path}: row {row}: {reason}")]
    MalformedRow {
        path: PathBuf,
        row: usize,
        reason: String,
    },

    #[error("{path}: x or w outside [0, 1] on rows {rows:?}")]
    OutOfRange { path: PathBuf, rows: Vec<usize> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    ///
    /// Validation problems (bad input, configuration, or shape) map to 2;
    /// numerical failures map to 3.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::IllConditioned { .. } | Error::StuckChain { .. } => 3,
            _ => 2,
        }
    }
}
