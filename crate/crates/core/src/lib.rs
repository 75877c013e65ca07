//! A desk-scale information-centric data lake.
//!
//! The crate is organised bottom-up:
//!
//! * [`wire`] names, packets, TLV encoding and digest signatures.
//! * [`tables`] the FIB, PIT and Content Store.
//! * [`forwarder`] the packet pipeline over faces, plus a threaded node runtime.
//! * [`fileserver`] a producer answering Interests from a store directory.
//! * [`consumer`] a windowed fetcher with retransmission.
//! * [`loader`] manifest sharding and ingestion into store directories.
//! * [`harness`] topologies, in-process clusters, failure injection and benchmarking.

pub mod clock;
pub mod consumer;
pub mod fileserver;
pub mod forwarder;
pub mod harness;
pub mod loader;
pub mod tables;
pub mod transport;
pub mod wire;

pub use clock::{Clock, Millis, VirtualClock, WallClock};
pub use consumer::{FetchError, FetchOptions, FetchReport};
pub use fileserver::{ObjectMeta, StoreMount};
pub use forwarder::{FaceId, Forwarder, ForwarderConfig};
pub use harness::{ClusterHandle, Topology};
pub use loader::{Manifest, ShardRange};
pub use wire::{Data, Interest, Name, Packet, WireError};
