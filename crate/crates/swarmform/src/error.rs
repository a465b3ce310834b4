//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid formation pattern: {0}")]
    InvalidPattern(String),

    #[error("invalid target command: {0}")]
    InvalidTargetCommand(String),

    #[error("swarm collapse: fewer than two nodes alive")]
    SwarmCollapse,

    #[error("policy dimension mismatch: expected {expected} inputs, observation has {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("parameter vector length {actual} does not match layout ({expected})")]
    ParamLength { expected: usize, actual: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("plant invariant violated: {0}")]
    PlantInvariant(String),

    #[error("training diverged at iteration {iteration}: {message}")]
    Divergence { iteration: usize, message: String },

    #[error("episode aborted at step {step}: non-finite state for node {node}")]
    NonFiniteState { step: usize, node: usize },

    #[error("trace is missing column {0}")]
    MissingColumn(String),

    #[error("trace is empty")]
    EmptyTrace,

    #[error("malformed trace row {line}: {message}")]
    MalformedRow { line: usize, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml error: {0}")]
    Toml(String),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable error kind, used by the CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidPattern(_) => "invalid_pattern",
            Error::InvalidTargetCommand(_) => "invalid_target_command",
            Error::SwarmCollapse => "swarm_collapse",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::ParamLength { .. } => "param_length",
            Error::Config(_) => "config",
            Error::PlantInvariant(_) => "plant_invariant",
            Error::Divergence { .. } => "divergence",
            Error::NonFiniteState { .. } => "non_finite_state",
            Error::MissingColumn(_) => "missing_column",
            Error::EmptyTrace => "empty_trace",
            Error::MalformedRow { .. } => "malformed_row",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Toml(_) => "toml",
        }
    }
}
