//! Topologies, in-process clusters, failure injection and benchmarking.
//!
//! A topology document describes forwarders, fileservers, the links between
//! them and the static inter-forwarder routes:
//!
//! ```json
//! {
//!   "nodes": [
//!     { "name": "gw", "kind": "forwarder", "config": { "listen_udp": "0.0.0.0:6363" } },
//!     { "name": "prod-a", "kind": "fileserver", "config": { "prefix": "/genomics/data/a", "root": "store-a" } }
//!   ],
//!   "links": [{ "id": "gw-a", "a": "gw", "b": "prod-a", "kind": "memory", "delay_ms": 0 }],
//!   "routes": [],
//!   "gateway": "gw"
//! }
//! ```
//!
//! Fileservers register their own prefixes when they start, so `routes` only
//! needs entries between forwarders.

mod bench;
mod cluster;
mod topology;

use thiserror::Error;

pub use bench::{bench, median, BenchOptions, BenchReport, BenchRun, BenchVia};
pub use cluster::{ClusterHandle, ClusterStats, ConsumerLink};
pub use topology::{load_topology, FileserverSpec, LinkKind, LinkSpec, NodeRole, NodeSpec, RouteSpec, Topology};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("topology: {0}")]
    Schema(String),
    #[error("topology: {0}")]
    UnknownReference(String),
    #[error("topology: more than one gateway ({})", .0.join(", "))]
    MultipleGateways(Vec<String>),
    #[error("topology: not connected to the gateway: {}", .0.join(", "))]
    DisconnectedGraph(Vec<String>),
    #[error("node {node} failed to start: {reason}")]
    StartupFailure { node: String, reason: String },
    #[error("no node named {0}")]
    UnknownNode(String),
    #[error(transparent)]
    Fetch(#[from] crate::consumer::FetchError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}
