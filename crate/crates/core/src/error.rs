//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used by callers that map failures to exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Parse,
    Numeric,
    Physics,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("non-finite rhs produced at state {state:?}")]
    NonFiniteRhs { state: Vec<f64> },

    #[error("step size must be nonnegative, got {h}")]
    NegativeStep { h: f64 },

    #[error("model does not expose {capability}")]
    UnsupportedCapability { capability: &'static str },

    #[error("at step {index}: {source}")]
    AtStep { index: usize, source: Box<Error> },

    #[error("tape node {node}: {message}")]
    Tape { node: usize, message: String },

    #[error("entropy-to-temperature overflow in zone {zone}: |dS/(mc)| = {magnitude}")]
    EntropyOverflow { zone: usize, magnitude: f64 },

    #[error("non-positive temperature {value} K in zone {zone}")]
    NonPositiveTemperature { zone: usize, value: f64 },

    #[error("piston bottomed out: gas volume {volume} m3 is not positive")]
    PistonBottom { volume: f64 },

    #[error("integration diverged at step {step}: state norm {norm:.3e}")]
    Divergence { step: usize, norm: f64 },

    #[error("finite-difference evaluation non-finite at coordinate {coordinate}")]
    NonFiniteEval { coordinate: usize },

    #[error("training diverged at epoch {epoch}: {reason}")]
    TrainingDiverged { epoch: usize, reason: String },

    #[error("non-finite loss in trajectory {trajectory} at rollout step {step}")]
    NonFiniteLoss { trajectory: usize, step: usize },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("physics violation: {0}")]
    PhysicsViolation(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Annotate an error with the rollout step that produced it.
    pub fn at_step(self, index: usize) -> Self {
        Error::AtStep {
            index,
            source: Box::new(self),
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Parse { .. } | Error::Config(_) => ErrorCategory::Parse,
            Error::PhysicsViolation(_) => ErrorCategory::Physics,
            Error::AtStep { source, .. } => source.category(),
            _ => ErrorCategory::Numeric,
        }
    }
}
