use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("local state at site {site} has norm {norm}, expected 1")]
    NotNormalized { site: usize, norm: f64 },

    #[error("gate is not unitary: max |U^dag U - I| = {deviation:e}")]
    NotUnitary { deviation: f64 },

    #[error("site index {index} out of range for a chain of {len} sites")]
    SiteOutOfRange { index: usize, len: usize },

    #[error("{what} needs at most {max} sites, got {len}")]
    TooManySites { what: &'static str, len: usize, max: usize },

    #[error("{what} needs at least {min} sites, got {len}")]
    TooFewSites { what: &'static str, len: usize, min: usize },

    #[error("Pauli sampling needs the orthogonality center on site 0, found {center:?}")]
    NotRightCanonical { center: Option<usize> },

    #[error("numerical consistency fault: {0}")]
    NumericalFault(String),

    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),

    #[error("fewer than 3 usable points ({usable} above the noise floor)")]
    TooFewPoints { usable: usize },

    #[error("deviation table for N={n} has a single point; saturation is undefined")]
    SinglePointTable { n: usize },

    #[error("series never stays within {epsilon} of {target} up to the final recorded time")]
    NotSaturated { target: f64, epsilon: f64 },

    #[error("bond dimension {chi} exceeds the configured hard cap {hard_cap}")]
    ChiAboveHardCap { chi: usize, hard_cap: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
