use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{PartitionId, ReplicaId};
use crate::node::{Protocol, ServerId, SimTime, Topology};
use crate::server::{GetRule, Timing};

/// One-way delay between two replicas: `base_us` plus a uniform draw from
/// `[0, jitter_us)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Latency {
    pub base_us: u64,
    #[serde(default)]
    pub jitter_us: u64,
}

impl Latency {
    pub fn constant(base_us: u64) -> Self {
        Latency {
            base_us,
            jitter_us: 0,
        }
    }
}

/// Override for one unordered replica pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub a: u16,
    pub b: u16,
    #[serde(flatten)]
    pub latency: Latency,
}

/// Replicas `a` and `b` cannot talk during `[start_us, end_us)`. Traffic
/// sent meanwhile is held and delivered when the cut heals. A cut with no
/// end never heals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cut {
    pub a: u16,
    pub b: u16,
    pub start_us: SimTime,
    #[serde(default)]
    pub end_us: Option<SimTime>,
}

impl Cut {
    pub fn joins(&self, x: ReplicaId, y: ReplicaId) -> bool {
        (self.a == x.0 && self.b == y.0) || (self.a == y.0 && self.b == x.0)
    }
}

/// Extra delay on every message a server sends to another node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlowServer {
    pub replica: u16,
    pub partition: u16,
    pub delay_us: u64,
    /// Restrict the delay to messages bound for this replica.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub only_to: Option<u16>,
}

impl SlowServer {
    pub fn id(&self) -> ServerId {
        ServerId::new(ReplicaId(self.replica), PartitionId(self.partition))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceLevel {
    /// Operations, protocol notes and final state only.
    Ops,
    /// Additionally client traffic and replication, but no timers or
    /// stabilization and heartbeat messages.
    Foreground,
    /// Additionally every message send/receive and timer firing.
    #[default]
    Full,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub protocol: Protocol,
    pub topology: Topology,
    pub timing: Timing,
    pub get_rule: GetRule,
    pub seed: u64,
    /// Clock offset per server in topology order; missing entries are 0.
    pub skew_us: Vec<i64>,
    pub intra_dc_us: u64,
    pub default_link: Latency,
    pub links: Vec<LinkSpec>,
    pub cuts: Vec<Cut>,
    pub slow_servers: Vec<SlowServer>,
    pub trace_level: TraceLevel,
    /// Extra quiet time after the last client finishes, on top of the
    /// computed drain period.
    pub extra_drain_us: SimTime,
    /// Abort if clients are still running at this time.
    pub max_time_us: SimTime,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            protocol: Protocol::HlcDsv,
            topology: Topology::new(2, 1),
            timing: Timing::default(),
            get_rule: GetRule::default(),
            seed: 0,
            skew_us: Vec::new(),
            intra_dc_us: 500,
            default_link: Latency::constant(5_000),
            links: Vec::new(),
            cuts: Vec::new(),
            slow_servers: Vec::new(),
            trace_level: TraceLevel::Full,
            extra_drain_us: 0,
            max_time_us: 600_000_000,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("topology needs at least one replica and one partition")]
    EmptyTopology,
    #[error("{0} skew entries for {1} servers")]
    TooManySkews(usize, usize),
    #[error("link or cut names replica {0}, topology has {1}")]
    UnknownReplica(u16, u16),
    #[error("cut between a replica and itself")]
    SelfCut,
    #[error("cut ends before it starts")]
    EmptyCut,
    #[error("slow server r{0}p{1} is not in the topology")]
    UnknownServer(u16, u16),
    #[error("timer periods must be positive")]
    ZeroPeriod,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let t = self.topology;
        if t.replicas == 0 || t.partitions == 0 {
            return Err(ConfigError::EmptyTopology);
        }
        if self.skew_us.len() > t.server_count() {
            return Err(ConfigError::TooManySkews(self.skew_us.len(), t.server_count()));
        }
        if self.timing.heartbeat_us == 0 || self.timing.stabilize_us == 0 {
            return Err(ConfigError::ZeroPeriod);
        }
        let known = |r: u16| {
            if r < t.replicas {
                Ok(())
            } else {
                Err(ConfigError::UnknownReplica(r, t.replicas))
            }
        };
        for l in &self.links {
            known(l.a)?;
            known(l.b)?;
        }
        for c in &self.cuts {
            known(c.a)?;
            known(c.b)?;
            if c.a == c.b {
                return Err(ConfigError::SelfCut);
            }
            if c.end_us.is_some_and(|e| e < c.start_us) {
                return Err(ConfigError::EmptyCut);
            }
        }
        for s in &self.slow_servers {
            if s.replica >= t.replicas || s.partition >= t.partitions {
                return Err(ConfigError::UnknownServer(s.replica, s.partition));
            }
        }
        Ok(())
    }

    pub fn skew_of(&self, s: ServerId) -> i64 {
        self.skew_us
            .get(self.topology.server_index(s))
            .copied()
            .unwrap_or(0)
    }

    pub fn link(&self, a: ReplicaId, b: ReplicaId) -> Latency {
        self.links
            .iter()
            .rev()
            .find(|l| (l.a == a.0 && l.b == b.0) || (l.a == b.0 && l.b == a.0))
            .map(|l| l.latency)
            .unwrap_or(self.default_link)
    }

    pub fn slow_delay(&self, s: ServerId, to: ReplicaId) -> u64 {
        self.slow_servers
            .iter()
            .filter(|x| x.id() == s && x.only_to.is_none_or(|r| r == to.0))
            .map(|x| x.delay_us)
            .sum()
    }

    /// Replica pairs separated by a cut that never heals.
    pub fn disconnected(&self) -> Vec<(u16, u16)> {
        let mut out: Vec<(u16, u16)> = self
            .cuts
            .iter()
            .filter(|c| c.end_us.is_none())
            .map(|c| (c.a.min(c.b), c.a.max(c.b)))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Quiet period after the last client operation, long enough for every
    /// message to land and for two full stabilization and heartbeat cycles
    /// to follow, including the time a lagging clock needs to catch up
    /// with the most advanced one.
    pub fn drain_us(&self) -> SimTime {
        let t = self.topology;
        let mut max_link = self.intra_dc_us;
        for a in 0..t.replicas {
            for b in 0..t.replicas {
                if a != b {
                    let l = self.link(ReplicaId(a), ReplicaId(b));
                    max_link = max_link.max(l.base_us + l.jitter_us);
                }
            }
        }
        let slow = self.slow_servers.iter().map(|s| s.delay_us).max().unwrap_or(0);
        let lo = self.skew_us.iter().copied().min().unwrap_or(0).min(0);
        let hi = self.skew_us.iter().copied().max().unwrap_or(0).max(0);
        let skew_spread = (hi - lo) as u64;
        let cycle = self.timing.stabilize_us + self.timing.heartbeat_us;
        2 * (max_link + slow + self.intra_dc_us) + 3 * cycle + skew_spread + 10_000 + self.extra_drain_us
    }

    pub fn max_skew_spread_us(&self) -> u64 {
        let lo = self.skew_us.iter().copied().min().unwrap_or(0).min(0);
        let hi = self.skew_us.iter().copied().max().unwrap_or(0).max(0);
        (hi - lo) as u64
    }
}
