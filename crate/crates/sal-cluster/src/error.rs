use std::io;

use thiserror::Error;

use crate::envelope::FrameError;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("topology: {0}")]
    Topology(String),
    #[error("partition plan: {0}")]
    Plan(String),
    #[error(
        "program state crosses partition keys, so it cannot be split over {0} nodes; run it on one node"
    )]
    NotDistributable(usize),
    #[error("peer {addr} unreachable after {attempts} attempts: {last}")]
    Unreachable {
        addr: String,
        attempts: u32,
        last: io::Error,
    },
    #[error("transport to or from {peer}: {source}")]
    Transport {
        peer: String,
        #[source]
        source: FrameError,
    },
    #[error("node {node} received a tuple it cannot parse: {detail}")]
    Malformed { node: usize, detail: String },
    #[error("node {0} stopped before producing all of its output")]
    NodeFailed(usize),
    #[error("output sink: {0}")]
    Sink(#[source] io::Error),
    #[error("{0}")]
    Config(String),
}
