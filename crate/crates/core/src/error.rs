use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid probability vector: {0}")]
    InvalidDistribution(String),

    #[error("invalid state function: {0}")]
    InvalidFunction(String),

    #[error("n-step power requires n >= 1 (use the identity kernel for n = 0)")]
    ZeroPower,

    #[error(
        "kernel is not reversible with respect to pi (max detailed-balance residual {residual:e})"
    )]
    NotReversible { residual: f64 },

    #[error("pi is not stationary for the kernel (max residual {residual:e})")]
    NotStationary { residual: f64 },

    #[error("state {state} has zero stationary mass; reversible pairs need pi > 0")]
    NullState { state: usize },

    #[error("exact conductance enumerates 2^s subsets; s = {states} exceeds the cap of {max}")]
    TooManyStates { states: usize, max: usize },

    #[error("{name} = {value} is out of range ({expected})")]
    OutOfRange {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("conductance is zero; the bound is infinite")]
    ZeroConductance,

    #[error("density oracle returned log-density {log_density} at step {step} (rho must be positive and finite)")]
    Density { step: u64, log_density: f64 },

    #[error("integrand returned a non-finite value at step {step}")]
    Integrand { step: u64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("need at least 2 replications, got {0}")]
    TooFewReplications(usize),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn out_of_range(name: &'static str, value: f64, expected: &'static str) -> Error {
    Error::OutOfRange {
        name,
        value,
        expected,
    }
}
