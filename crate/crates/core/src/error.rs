//! Error types shared across the crate.

use thiserror::Error;

/// Problem-definition errors: structurally broken specs or bad inputs to
/// coefficient evaluation. Semantic assumption failures are *not* errors;
/// they are reported by the validator.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("non-finite input: {context}")]
    NonFiniteInput { context: String },
    #[error("malformed problem spec: {0}")]
    Shape(String),
}

/// Grid construction and stability errors.
#[derive(Debug, Error)]
pub enum GridError {
    #[error("malformed grid request: {0}")]
    Request(String),
    #[error("time step dt = {dt:.6e} violates the stability bound dt_max = {dt_max:.6e}")]
    CflViolation { dt: f64, dt_max: f64 },
}

/// Solver failures.
#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(
        "obstacle fixed point did not converge at slice {slice} \
         (last change {residual:.6e} after {iterations} iterations)"
    )]
    FixedPointDiverged {
        slice: usize,
        residual: f64,
        iterations: usize,
    },
    #[error("slice count mismatch: result has {got} slices, grid expects {want}")]
    StackShape { got: usize, want: usize },
}

/// Monte Carlo simulation failures.
#[derive(Debug, Clone, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("non-finite state on path {path} at slice {slice}")]
    NonFiniteState { path: u64, slice: usize },
}

/// Config-file errors. These map to usage/parse exit codes in the CLI.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}
