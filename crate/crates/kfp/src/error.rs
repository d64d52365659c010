//! Crate-wide error type. Every failure path names the quantity that went
//! wrong and, where useful, the remedy (coarser/finer grid, different shift,
//! removing a stale lock file).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum KfpError {
    #[error("config: {0}")]
    Config(String),

    #[error("grid: {0}")]
    Grid(String),

    #[error("model: {0}")]
    Model(String),

    #[error("invariant direction: {0}")]
    InvariantDirection(String),

    #[error("stabilizability: {0}")]
    Stabilizability(String),

    #[error("riccati: {0}")]
    Riccati(String),

    #[error("integration stalled at t = {t:.6}: step size underflowed (stiffness exceeds the explicit scheme; tighten tolerances or shorten the horizon)")]
    StepUnderflow { t: f64 },

    #[error("simulate: {0}")]
    Simulate(String),

    #[error("container: {0}")]
    Container(String),

    #[error("output lock: {0}")]
    Lock(String),

    #[error(transparent)]
    Mat(#[from] matkernel::MatError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, KfpError>;
