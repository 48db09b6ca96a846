//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("Fock cutoff {cutoff} too small: truncated mass {mass} below required {required}")]
    Truncation {
        cutoff: usize,
        mass: f64,
        required: f64,
    },

    #[error("invalid phonon transition: initial index {i} plus detuning {kappa} is negative")]
    InvalidTransition { i: usize, kappa: i64 },

    #[error("integrator step {dt} too large; use dt <= {max_dt}")]
    StepSize { dt: f64, max_dt: f64 },

    #[error("tau grid too coarse: {points_per_period:.1} samples per shortest oscillation, need >= 20")]
    TauGridTooCoarse { points_per_period: f64 },

    #[error("spectrum contains no usable peak")]
    EmptySpectrum,

    #[error("config error: {0}")]
    Config(String),

    #[error("numeric tolerance failure: {0}")]
    Tolerance(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
