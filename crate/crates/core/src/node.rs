//! Identifiers, the handler context, and the traits both protocols
//! implement so the simulator can drive them interchangeably.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::hlc::{HlcError, HlcTimestamp};
use crate::message::{Message, ReadItem, RequestId};
use crate::model::{Key, ModelError, PartitionId, Placement, ReplicaId, StableVector, Stamp, Value};
use crate::storage::Store;

/// Simulated time in microseconds.
pub type SimTime = u64;

pub const MICROS_PER_MS: u64 = 1000;

/// Physical clock reading in whole milliseconds for a node whose clock is
/// offset by `skew_us` from simulated time. Clamped at zero.
pub fn physical_ms(now: SimTime, skew_us: i64) -> u64 {
    let t = now as i64 + skew_us;
    if t <= 0 {
        0
    } else {
        t as u64 / MICROS_PER_MS
    }
}

/// Earliest instant `>= now` at which `physical_ms` exceeds `ms`.
pub fn earliest_physical_above(now: SimTime, skew_us: i64, ms: u64) -> SimTime {
    let target = (ms as i64 + 1) * MICROS_PER_MS as i64 - skew_us;
    (target.max(0) as u64).max(now)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    HlcDsv,
    #[serde(rename = "gentlerain")]
    GentleRain,
}

impl Protocol {
    pub const ALL: [Protocol; 2] = [Protocol::HlcDsv, Protocol::GentleRain];

    pub fn tag(self) -> &'static str {
        match self {
            Protocol::HlcDsv => "hlc-dsv",
            Protocol::GentleRain => "gentlerain",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// `M` replicas of `N` partitions each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub replicas: u16,
    pub partitions: u16,
}

impl Topology {
    pub fn new(replicas: u16, partitions: u16) -> Self {
        assert!(replicas >= 1 && partitions >= 1, "empty topology");
        Topology {
            replicas,
            partitions,
        }
    }

    pub fn placement(&self) -> Placement {
        Placement::new(self.partitions)
    }

    pub fn partition_of(&self, key: &Key) -> PartitionId {
        self.placement().partition_of(key.as_slice())
    }

    pub fn servers(&self) -> impl Iterator<Item = ServerId> {
        let n = self.partitions;
        (0..self.replicas).flat_map(move |m| {
            (0..n).map(move |p| ServerId::new(ReplicaId(m), PartitionId(p)))
        })
    }

    pub fn server_count(&self) -> usize {
        self.replicas as usize * self.partitions as usize
    }

    pub fn server_index(&self, s: ServerId) -> usize {
        s.replica.index() * self.partitions as usize + s.partition.index()
    }

    /// Same partition at every other replica.
    pub fn peers(&self, s: ServerId) -> impl Iterator<Item = ServerId> {
        let me = s;
        (0..self.replicas)
            .filter(move |m| *m != me.replica.0)
            .map(move |m| ServerId::new(ReplicaId(m), me.partition))
    }
}

/// Partition `n` of replica `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ServerId {
    pub replica: ReplicaId,
    pub partition: PartitionId,
}

impl ServerId {
    pub fn new(replica: ReplicaId, partition: PartitionId) -> Self {
        ServerId { replica, partition }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeId {
    Server(ServerId),
    Client(u32),
}

impl From<ServerId> for NodeId {
    fn from(s: ServerId) -> Self {
        NodeId::Server(s)
    }
}

impl NodeId {
    pub fn server(self) -> Option<ServerId> {
        match self {
            NodeId::Server(s) => Some(s),
            NodeId::Client(_) => None,
        }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Server(s) => write!(f, "r{}p{}", s.replica.0, s.partition.0),
            NodeId::Client(c) => write!(f, "c{c}"),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("bad node id {0:?}")]
pub struct ParseNodeIdError(String);

impl FromStr for NodeId {
    type Err = ParseNodeIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ParseNodeIdError(s.to_string());
        if let Some(rest) = s.strip_prefix('c') {
            return rest.parse().map(NodeId::Client).map_err(|_| bad());
        }
        let rest = s.strip_prefix('r').ok_or_else(bad)?;
        let (m, n) = rest.split_once('p').ok_or_else(bad)?;
        let m = m.parse().map_err(|_| bad())?;
        let n = n.parse().map_err(|_| bad())?;
        Ok(NodeId::Server(ServerId::new(ReplicaId(m), PartitionId(n))))
    }
}

impl Serialize for NodeId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodeId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A client-level operation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Op {
    Get { key: Key },
    Put { key: Key, value: Value },
    Rotx { keys: Vec<Key> },
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Get { .. } => "get",
            Op::Put { .. } => "put",
            Op::Rotx { .. } => "rotx",
        }
    }
}

/// What a completed operation returned.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Outcome {
    Get {
        key: Key,
        value: Option<Value>,
        item: Option<Stamp>,
    },
    Put {
        key: Key,
        stamp: Stamp,
    },
    Rotx {
        items: Vec<ReadItem>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Timer {
    Heartbeat,
    Stabilize,
    WakePut { token: u64 },
}

/// Protocol events that are not messages but matter to analysis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "note", rename_all = "kebab-case")]
pub enum Note {
    /// A PUT could not be timestamped yet; it completes after `wait_us`.
    PutDeferred { req: RequestId, wait_us: u64 },
    /// A transaction is held until the stable time catches up.
    RotxParked { req: RequestId },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Effect {
    Send { to: NodeId, msg: Message },
    Schedule { at: SimTime, timer: Timer },
    Note(Note),
}

/// Everything a handler may observe about its environment, and the sink
/// for everything it wants done.
#[derive(Debug)]
pub struct Ctx {
    now: SimTime,
    skew_us: i64,
    effects: Vec<Effect>,
}

impl Ctx {
    pub fn new(now: SimTime, skew_us: i64) -> Self {
        Ctx {
            now,
            skew_us,
            effects: Vec::new(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn physical_ms(&self) -> u64 {
        physical_ms(self.now, self.skew_us)
    }

    pub fn earliest_physical_above(&self, ms: u64) -> SimTime {
        earliest_physical_above(self.now, self.skew_us, ms)
    }

    pub fn send(&mut self, to: impl Into<NodeId>, msg: Message) {
        self.effects.push(Effect::Send { to: to.into(), msg });
    }

    pub fn schedule(&mut self, at: SimTime, timer: Timer) {
        self.effects.push(Effect::Schedule { at, timer });
    }

    pub fn note(&mut self, note: Note) {
        self.effects.push(Effect::Note(note));
    }

    pub fn effects(&self) -> &[Effect] {
        &self.effects
    }

    pub fn into_effects(self) -> Vec<Effect> {
        self.effects
    }
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("key {key} does not live on {at}")]
    WrongPartition { key: Key, at: NodeId },
    #[error("{from} sent {kind}, which {at} does not accept")]
    Unexpected {
        from: NodeId,
        at: NodeId,
        kind: &'static str,
    },
    #[error("{kind} from {from} went backwards: {got} < {have}")]
    OutOfOrder {
        from: NodeId,
        kind: &'static str,
        got: HlcTimestamp,
        have: HlcTimestamp,
    },
    #[error("transaction with no keys")]
    EmptyTransaction,
    #[error("unknown transaction {0}")]
    UnknownTxn(u64),
    #[error(transparent)]
    Clock(#[from] HlcError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ClientError {
    #[error("client homed at {home} may not contact {target}")]
    Stickiness { home: ReplicaId, target: ReplicaId },
    #[error("transaction with no keys")]
    EmptyTransaction,
    #[error("reply {kind} does not match any outstanding request")]
    UnexpectedReply { kind: &'static str },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A partition state machine.
pub trait ServerNode {
    fn id(&self) -> ServerId;

    /// Arms periodic timers.
    fn start(&mut self, ctx: &mut Ctx);

    fn on_message(&mut self, from: NodeId, msg: Message, ctx: &mut Ctx)
        -> Result<(), ProtocolError>;

    fn on_timer(&mut self, timer: Timer, ctx: &mut Ctx) -> Result<(), ProtocolError>;

    /// Current local clock value.
    fn clock(&self) -> HlcTimestamp;

    /// Per-replica watermark this server treats as fully received.
    fn stable_frontier(&self) -> StableVector;

    fn store(&self) -> &Store;

    /// The version a reader with no history would see here right now.
    fn visible_winner(&self, key: &Key) -> Option<Stamp>;
}

/// Client-side protocol state for one sticky session.
pub trait Session {
    fn home(&self) -> ReplicaId;

    /// Builds the request for `op` and the partition to send it to.
    fn request(&mut self, req: RequestId, op: &Op) -> Result<(ServerId, Message), ClientError>;

    /// Folds a reply into session state and returns the outcome.
    fn complete(&mut self, op: &Op, reply: Message) -> Result<Outcome, ClientError>;

    /// Rejects any attempt to talk to another replica.
    fn check_target(&self, target: ReplicaId) -> Result<(), ClientError> {
        if target != self.home() {
            return Err(ClientError::Stickiness {
                home: self.home(),
                target,
            });
        }
        Ok(())
    }
}

/// The partition that coordinates a transaction: lowest one hosting a key.
pub fn coordinator_for(topo: &Topology, keys: &[Key]) -> Option<PartitionId> {
    keys.iter().map(|k| topo.partition_of(k)).min()
}
