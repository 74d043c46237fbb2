//! Crate-wide error type.

/// Errors produced by the simulator's library layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A shape invariant was violated (mismatched lengths, wrong layout).
    #[error("shape mismatch for {what}: got {got}, expected {expected}")]
    ShapeMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },

    /// An argument is outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A configuration value or combination is unusable.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// An aggregator was called with no updates.
    #[error("empty update set")]
    EmptyUpdates,

    /// An aggregator needs more clients than it was given.
    #[error("{defense} needs at least {need} clients, got {have}")]
    InsufficientClients {
        defense: &'static str,
        have: usize,
        need: usize,
    },

    /// A NaN or infinity reached a place that must stay finite.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// The requested client partition cannot be built from the dataset.
    #[error("infeasible partition: {0}")]
    InfeasiblePartition(String),

    /// A parameter block name does not exist in the layout.
    #[error("unknown parameter block '{0}'")]
    UnknownBlock(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
