//! Partitioned execution of SAL programs over N logical nodes.

mod cpu;
pub mod envelope;
mod error;
pub mod hash;
pub mod plan;
mod runtime;
pub mod topology;
mod transport;

pub use cpu::thread_cpu_seconds;
pub use envelope::{Envelope, FrameError, MAX_PAYLOAD};
pub use error::ClusterError;
pub use hash::{ip_hash, string_hash, HashFunction};
pub use plan::{NodePlacement, NodeSet, PartitionKey, PartitionPlan, RouteError};
pub use runtime::{
    Cluster, ClusterConfig, ClusterRun, Ingest, NodeReport, Sink, Transport, DEFAULT_BATCH_SIZE,
    DEFAULT_QUEUE_CAPACITY,
};
pub use topology::{NodeTopology, PeerAddress};
pub use transport::{connect_with_retry, RetryPolicy};
