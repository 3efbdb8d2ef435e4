//! Experiment presets and their tunable parameters.
//!
//! Every preset carries a base simulator config in `sim`. Fields the
//! preset varies (protocol, topology, skews, links, slow servers, seed)
//! are overwritten per run; the rest apply as given.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use causalkv::sim::{SimConfig, TraceLevel};
use causalkv::Topology;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PresetName {
    PutSkew,
    QueryAmp,
    Visibility,
    RotxSlow,
    Soak,
}

impl PresetName {
    pub const ALL: [PresetName; 5] = [
        PresetName::PutSkew,
        PresetName::QueryAmp,
        PresetName::Visibility,
        PresetName::RotxSlow,
        PresetName::Soak,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            PresetName::PutSkew => "put-skew",
            PresetName::QueryAmp => "query-amp",
            PresetName::Visibility => "visibility",
            PresetName::RotxSlow => "rotx-slow",
            PresetName::Soak => "soak",
        }
    }
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for PresetName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PresetName::ALL
            .into_iter()
            .find(|p| p.tag() == s)
            .ok_or_else(|| format!("unknown preset {s:?}"))
    }
}

fn sim(topology: Topology, trace_level: TraceLevel) -> SimConfig {
    SimConfig {
        topology,
        trace_level,
        ..SimConfig::default()
    }
}

/// One client sends PUTs alternately to two partitions of one replica,
/// one of whose clocks runs behind by the skew.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PutSkew {
    pub skews_ms: Vec<u64>,
    pub puts: u32,
    pub start_ms: u64,
    pub sim: SimConfig,
}

impl Default for PutSkew {
    fn default() -> Self {
        PutSkew {
            skews_ms: (0..=16).step_by(2).collect(),
            puts: 200,
            start_ms: 300,
            sim: sim(Topology::new(1, 2), TraceLevel::Full),
        }
    }
}

/// End-user requests that each turn into `factor` dependent PUTs spread
/// round-robin over two partitions, one of them behind by `skew_ms`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QueryAmp {
    pub skew_ms: u64,
    pub total_puts: u32,
    pub factors: Vec<u32>,
    /// Gap between request arrivals per PUT they contain.
    pub arrival_gap_ms: u64,
    pub start_ms: u64,
    pub sim: SimConfig,
}

impl Default for QueryAmp {
    fn default() -> Self {
        QueryAmp {
            skew_ms: 100,
            total_puts: 2000,
            factors: vec![1, 10, 50, 100, 500],
            arrival_gap_ms: 2,
            start_ms: 300,
            sim: sim(Topology::new(1, 2), TraceLevel::Ops),
        }
    }
}

/// A location for the third data center, by round-trip time to A and B.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub name: String,
    pub rtt_a_ms: f64,
    pub rtt_b_ms: f64,
}

/// Two clients in A and B take turns incrementing a shared counter while
/// C moves further away.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Visibility {
    pub sites: Vec<Site>,
    pub rtt_ab_ms: f64,
    pub target: u64,
    pub poll_ms: u64,
    pub start_ms: u64,
    pub sim: SimConfig,
}

impl Default for Visibility {
    fn default() -> Self {
        let site = |name: &str, a: f64, b: f64| Site {
            name: name.to_string(),
            rtt_a_ms: a,
            rtt_b_ms: b,
        };
        Visibility {
            sites: vec![
                site("California", 1.1709114, 0.3201521),
                site("Oregon", 21.8699663, 20.6107391),
                site("Virginia", 67.0469505, 61.2305881),
                site("Ireland", 138.2809544, 139.3212938),
                site("Sydney", 159.0899451, 158.4004238),
                site("Singapore", 175.6392972, 175.6030464),
            ],
            rtt_ab_ms: 2.0,
            target: 100,
            poll_ms: 1,
            start_ms: 100,
            sim: sim(Topology::new(3, 1), TraceLevel::Ops),
        }
    }
}

/// Readers mixing GETs and three-key transactions in a data center where
/// one partition sends everything late, with writers keeping data fresh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RotxSlow {
    pub slowdowns_ms: Vec<u64>,
    pub replicas: u16,
    pub partitions: u16,
    pub slow_partition: u16,
    pub keys_per_partition: usize,
    pub readers: u16,
    pub ops_per_reader: u32,
    pub rotx_size: usize,
    pub think_ms: u64,
    pub writers: u16,
    pub write_gap_ms: u64,
    /// Writers stop after `write_base_ms + write_per_slow * slowdown`.
    pub write_base_ms: u64,
    pub write_per_slow: u64,
    pub start_ms: u64,
    pub sim: SimConfig,
}

impl Default for RotxSlow {
    fn default() -> Self {
        RotxSlow {
            slowdowns_ms: vec![0, 100, 500],
            replicas: 2,
            partitions: 6,
            slow_partition: 5,
            keys_per_partition: 4,
            readers: 8,
            ops_per_reader: 50,
            rotx_size: 3,
            think_ms: 1,
            writers: 8,
            write_gap_ms: 2,
            write_base_ms: 3_000,
            write_per_slow: 40,
            start_ms: 100,
            sim: sim(Topology::new(2, 6), TraceLevel::Foreground),
        }
    }
}

/// Randomized mixed workload under large skews and jittery links.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Soak {
    pub replicas: u16,
    pub partitions: u16,
    pub clients_per_replica: u16,
    pub ops_per_client: u32,
    pub keys_per_partition: usize,
    pub max_skew_ms: u64,
    pub link_base_ms: u64,
    pub link_jitter_ms: u64,
    pub max_think_ms: u64,
    pub sim: SimConfig,
}

impl Default for Soak {
    fn default() -> Self {
        Soak {
            replicas: 3,
            partitions: 4,
            clients_per_replica: 2,
            ops_per_client: 167,
            keys_per_partition: 4,
            max_skew_ms: 100,
            link_base_ms: 10,
            link_jitter_ms: 40,
            max_think_ms: 5,
            sim: sim(Topology::new(3, 4), TraceLevel::Full),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case")]
pub enum Preset {
    PutSkew(PutSkew),
    QueryAmp(QueryAmp),
    Visibility(Visibility),
    RotxSlow(RotxSlow),
    Soak(Soak),
}

#[derive(Debug, thiserror::Error)]
pub enum PresetError {
    #[error("config must be a JSON object")]
    NotAnObject,
    #[error("config names preset {found} but {expected} was requested")]
    WrongPreset { expected: PresetName, found: String },
    #[error("invalid config: {0}")]
    Invalid(#[from] serde_json::Error),
}

impl Preset {
    pub fn defaults(name: PresetName) -> Preset {
        match name {
            PresetName::PutSkew => Preset::PutSkew(PutSkew::default()),
            PresetName::QueryAmp => Preset::QueryAmp(QueryAmp::default()),
            PresetName::Visibility => Preset::Visibility(Visibility::default()),
            PresetName::RotxSlow => Preset::RotxSlow(RotxSlow::default()),
            PresetName::Soak => Preset::Soak(Soak::default()),
        }
    }

    pub fn name(&self) -> PresetName {
        match self {
            Preset::PutSkew(_) => PresetName::PutSkew,
            Preset::QueryAmp(_) => PresetName::QueryAmp,
            Preset::Visibility(_) => PresetName::Visibility,
            Preset::RotxSlow(_) => PresetName::RotxSlow,
            Preset::Soak(_) => PresetName::Soak,
        }
    }

    /// Applies a JSON merge patch to the preset's parameters. A `preset`
    /// member, if present, must name this preset.
    pub fn patch(&self, patch: &serde_json::Value) -> Result<Preset, PresetError> {
        let obj = patch.as_object().ok_or(PresetError::NotAnObject)?;
        if let Some(found) = obj.get("preset") {
            if found.as_str() != Some(self.name().tag()) {
                return Err(PresetError::WrongPreset {
                    expected: self.name(),
                    found: found.to_string(),
                });
            }
        }
        let mut doc = serde_json::to_value(self)?;
        json_patch::merge(&mut doc, patch);
        Ok(serde_json::from_value(doc)?)
    }
}
