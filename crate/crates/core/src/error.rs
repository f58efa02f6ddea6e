use std::path::PathBuf;

use thiserror::Error;

use crate::ids::{EdgeId, NodeId, VehicleId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{source_name}:{line}: {msg}")]
    Parse {
        source_name: String,
        line: usize,
        msg: String,
    },

    #[error("no route from node {from} to node {to}")]
    Unreachable { from: NodeId, to: NodeId },

    #[error("unknown node {0}")]
    UnknownNode(NodeId),

    #[error("unknown edge {0}")]
    UnknownEdge(EdgeId),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("vehicle {vehicle}: {msg}")]
    Scenario { vehicle: VehicleId, msg: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("distance must be positive, got {0} m")]
    NonPositiveDistance(f64),

    #[error("cannot merge reports of edge {0} and edge {1}")]
    EdgeMismatch(EdgeId, EdgeId),

    #[error("{0}: existing CSV header does not match")]
    HeaderMismatch(PathBuf),

    #[error("{0} requires at least one value")]
    Empty(&'static str),

    #[error("event trace diverged at entry {index}: {msg}")]
    TraceMismatch { index: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(source_name: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.into(),
            line,
            msg: msg.into(),
        }
    }
}
