//! Causally consistent geo-replicated partitioned key-value store built on
//! hybrid logical clocks, dependency sets and per-replica stable vectors,
//! together with a GentleRain baseline, a deterministic discrete-event
//! simulator and an offline consistency checker.

pub mod checker;
pub mod client;
pub mod gentlerain;
pub mod hlc;
pub mod message;
pub mod model;
pub mod node;
pub mod server;
pub mod sim;
pub mod storage;

pub use hlc::{HlcError, HlcTimestamp};
pub use message::{Message, ReadItem, RequestId};
pub use model::{
    DependencySet, Key, PartitionId, Placement, ReplicaId, StableVector, Stamp, Value, Version,
};
pub use node::{NodeId, Op, Outcome, Protocol, ServerId, Topology};
