use thiserror::Error;

use crate::geometry::Vec2;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid workspace: {0}")]
    InvalidWorkspace(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("free space too small: {0}")]
    NoFreeSpace(String),

    #[error("cannot connect {point:?} to the roadmap (nearest node {nearest:?} at {distance:.2} px)")]
    Disconnected {
        point: Vec2,
        nearest: Option<Vec2>,
        distance: f64,
    },

    #[error("no path between {from:?} and {to:?} on the roadmap")]
    NoPath { from: Vec2, to: Vec2 },

    #[error("medial-axis retraction did not converge from {0:?}")]
    RetractionFailed(Vec2),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("replay buffer holds {len} transitions, batch needs {needed}")]
    Underfilled { len: usize, needed: usize },

    #[error("non-finite loss at update {update}: {detail}")]
    NonFiniteLoss { update: u64, detail: String },

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error("protocol: {0}")]
    Protocol(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
