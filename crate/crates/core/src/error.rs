use thiserror::Error;

/// Errors raised across the solver, diagnostics and verification layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch: expected {expected} values, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("invalid axis {0}; expected 1, 2 or 3")]
    InvalidAxis(usize),

    #[error("invalid exponent {value}: {reason}")]
    InvalidExponent { value: f64, reason: &'static str },

    #[error("Sobolev order {0} unsupported (0, 1 or 2)")]
    UnsupportedOrder(usize),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("field is not in the discrete divergence-free, no-slip space: {0}")]
    NotInSpace(String),

    #[error("negative V-norm squared {0:e}; projection inconsistent")]
    NegativeVNorm(f64),

    #[error("singular vertical solve at mode (mx={mx}, my={my})")]
    SingularMode { mx: i64, my: i64 },

    #[error("non-finite state at t={time} (step {step})")]
    NonFinite { time: f64, step: u64 },

    #[error("CFL number {cfl:.3} exceeds limit {limit:.3}; reduce dt below {suggested_dt:.3e}")]
    Cfl { cfl: f64, limit: f64, suggested_dt: f64 },

    #[error("empty sample set")]
    EmptySamples,

    #[error("all {0} samples are degenerate (zero right-hand side)")]
    Degenerate(usize),

    #[error("unknown suite `{0}`")]
    UnknownSuite(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("checkpoint format: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
