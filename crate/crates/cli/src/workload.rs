//! Client programs used by the presets.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use causalkv::sim::{ClientProgram, Script, Step};
use causalkv::{Key, Op, Outcome, PartitionId, Topology};

/// The first `count` keys named `{prefix}{i}` that land on `partition`.
pub fn keys_on(topo: Topology, prefix: &str, partition: u16, count: usize) -> Vec<Key> {
    (0..)
        .map(|i| Key::from(format!("{prefix}{i}")))
        .filter(|k| topo.partition_of(k) == PartitionId(partition))
        .take(count)
        .collect()
}

/// `per_partition` keys on each partition, interleaved by partition.
pub fn key_space(topo: Topology, prefix: &str, per_partition: usize) -> Vec<Key> {
    let by_partition: Vec<Vec<Key>> = (0..topo.partitions)
        .map(|p| keys_on(topo, prefix, p, per_partition))
        .collect();
    (0..per_partition)
        .flat_map(|i| by_partition.iter().map(move |ks| ks[i].clone()))
        .collect()
}

fn put(key: &Key, value: String) -> Op {
    Op::Put {
        key: key.clone(),
        value: value.into(),
    }
}

/// PUTs cycling through `keys`, back to back.
#[derive(Debug, Clone)]
pub struct RoundRobinPuts {
    pub keys: Vec<Key>,
    pub remaining: u32,
    pub next: usize,
}

impl ClientProgram for RoundRobinPuts {
    fn next(&mut self, _: Option<&Outcome>, _: u64, _: &mut ChaCha8Rng) -> Option<Step> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let key = &self.keys[self.next % self.keys.len()];
        self.next += 1;
        Some(Step::now(put(key, format!("v{}", self.next))))
    }
}

/// One end-user request: `factor` dependent PUTs issued in turn over the
/// keys, starting at `first`.
pub fn amplified_request(keys: &[Key], factor: u32, first: usize) -> Script {
    Script::new((0..factor as usize).map(|i| {
        let key = &keys[(first + i) % keys.len()];
        Step::now(put(key, format!("r{first}.{i}")))
    }))
}

/// Shared counter: reads `key` every `poll_us` and increments it whenever
/// its parity matches, until it reaches `target`. An absent key counts as
/// zero.
#[derive(Debug, Clone)]
pub struct Counter {
    pub key: Key,
    pub parity: u64,
    pub target: u64,
    pub poll_us: u64,
}

impl ClientProgram for Counter {
    fn next(&mut self, last: Option<&Outcome>, _: u64, _: &mut ChaCha8Rng) -> Option<Step> {
        let get = Op::Get {
            key: self.key.clone(),
        };
        match last {
            Some(Outcome::Get { value, .. }) => {
                let n = value
                    .as_ref()
                    .and_then(|v| v.as_str()?.parse::<u64>().ok())
                    .unwrap_or(0);
                if n >= self.target {
                    None
                } else if n % 2 == self.parity {
                    Some(Step::now(put(&self.key, (n + 1).to_string())))
                } else {
                    Some(Step::after(self.poll_us, get))
                }
            }
            _ => Some(Step::now(get)),
        }
    }
}

/// Half GETs, half transactions over `size` distinct keys.
#[derive(Debug, Clone)]
pub struct HotKeyReader {
    pub keys: Vec<Key>,
    pub remaining: u32,
    pub size: usize,
    pub think_us: u64,
}

impl ClientProgram for HotKeyReader {
    fn next(&mut self, _: Option<&Outcome>, _: u64, rng: &mut ChaCha8Rng) -> Option<Step> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let op = if rng.gen_bool(0.5) {
            Op::Get {
                key: self.keys.choose(rng).expect("keys").clone(),
            }
        } else {
            Op::Rotx {
                keys: self.keys.choose_multiple(rng, self.size).cloned().collect(),
            }
        };
        Some(Step::after(self.think_us, op))
    }
}

/// PUTs to random keys every `gap_us` until `until_us`.
#[derive(Debug, Clone)]
pub struct TimedWriter {
    pub keys: Vec<Key>,
    pub until_us: u64,
    pub gap_us: u64,
    pub written: u64,
}

impl ClientProgram for TimedWriter {
    fn next(&mut self, _: Option<&Outcome>, now: u64, rng: &mut ChaCha8Rng) -> Option<Step> {
        if now >= self.until_us {
            return None;
        }
        self.written += 1;
        let key = self.keys.choose(rng).expect("keys");
        Some(Step::after(self.gap_us, put(key, format!("w{}", self.written))))
    }
}

/// Randomized GET/PUT/ROTX mix for correctness runs.
#[derive(Debug, Clone)]
pub struct Mixed {
    pub keys: Vec<Key>,
    pub remaining: u32,
    pub max_think_us: u64,
    pub written: u64,
}

impl ClientProgram for Mixed {
    fn next(&mut self, _: Option<&Outcome>, _: u64, rng: &mut ChaCha8Rng) -> Option<Step> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let op = match rng.gen_range(0..10) {
            0..=3 => {
                self.written += 1;
                put(self.keys.choose(rng).expect("keys"), format!("m{}", self.written))
            }
            4..=7 => Op::Get {
                key: self.keys.choose(rng).expect("keys").clone(),
            },
            _ => {
                let size = rng.gen_range(1..=3);
                Op::Rotx {
                    keys: self.keys.choose_multiple(rng, size).cloned().collect(),
                }
            }
        };
        Some(Step::after(rng.gen_range(0..=self.max_think_us), op))
    }
}
