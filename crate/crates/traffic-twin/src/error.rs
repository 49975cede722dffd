use crate::map::{EdgeId, NodeId};
use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no route from {from} to {to}")]
    NoRoute { from: NodeId, to: NodeId },

    #[error("unknown node id `{0}`")]
    UnknownNode(NodeId),

    #[error("unknown edge id `{0}`")]
    UnknownEdge(EdgeId),

    #[error("pose is {distance:.3} m from the path, beyond the {corridor:.3} m corridor")]
    OffPath { distance: f64, corridor: f64 },

    #[error("trajectory dt mismatch: {0} vs {1}")]
    MismatchedDt(f64, f64),

    #[error("map error: {0}")]
    Map(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn map(msg: impl Into<String>) -> Self {
        Error::Map(msg.into())
    }
}
