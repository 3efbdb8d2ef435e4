//! Message timing: latency, jitter, cuts, slow senders and per-pair FIFO.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::ReplicaId;
use crate::node::{NodeId, SimTime, Topology};
use crate::sim::config::SimConfig;

const JITTER_PURPOSE: u64 = 0x6a69_7474_6572;

/// Replica a node lives in; clients share their home replica.
pub fn replica_of(node: NodeId, client_homes: &[ReplicaId]) -> ReplicaId {
    match node {
        NodeId::Server(s) => s.replica,
        NodeId::Client(c) => client_homes[c as usize],
    }
}

fn node_index(topo: &Topology, node: NodeId) -> u64 {
    match node {
        NodeId::Server(s) => topo.server_index(s) as u64,
        NodeId::Client(c) => topo.server_count() as u64 + u64::from(c),
    }
}

#[derive(Debug)]
pub struct Network {
    seed: u64,
    jitter: BTreeMap<(NodeId, NodeId), ChaCha8Rng>,
    last_delivery: BTreeMap<(NodeId, NodeId), SimTime>,
}

impl Network {
    pub fn new(seed: u64) -> Self {
        Network {
            seed,
            jitter: BTreeMap::new(),
            last_delivery: BTreeMap::new(),
        }
    }

    /// Delivery time for a message sent now, or `None` if it can never
    /// arrive. Updates the FIFO bookkeeping.
    pub fn delivery_time(
        &mut self,
        cfg: &SimConfig,
        homes: &[ReplicaId],
        from: NodeId,
        to: NodeId,
        now: SimTime,
    ) -> Option<SimTime> {
        if from == to {
            return Some(now);
        }
        let a = replica_of(from, homes);
        let b = replica_of(to, homes);
        let mut delay = if a == b {
            cfg.intra_dc_us
        } else {
            let link = cfg.link(a, b);
            let jitter = if link.jitter_us > 0 {
                let topo = cfg.topology;
                let seed = self.seed;
                let rng = self.jitter.entry((from, to)).or_insert_with(|| {
                    let mut r = ChaCha8Rng::seed_from_u64(seed ^ JITTER_PURPOSE);
                    let stride = topo.server_count() as u64 + 1 + homes.len() as u64;
                    r.set_stream(node_index(&topo, from) * stride + node_index(&topo, to));
                    r
                });
                rng.gen_range(0..link.jitter_us)
            } else {
                0
            };
            link.base_us + jitter
        };
        if let NodeId::Server(s) = from {
            delay += cfg.slow_delay(s, b);
        }
        let mut arrival = now + delay;
        if a != b {
            // Held while any cut between the two replicas overlaps the
            // flight; repeat in case heal time falls into another cut.
            loop {
                let blocking = cfg
                    .cuts
                    .iter()
                    .filter(|c| c.joins(a, b))
                    .filter(|c| c.start_us <= arrival && c.end_us.is_none_or(|e| e > now))
                    .map(|c| c.end_us)
                    .max();
                match blocking {
                    None => break,
                    Some(None) => return None,
                    Some(Some(end)) if end > arrival => arrival = end,
                    Some(Some(_)) => break,
                }
            }
        }
        let last = self.last_delivery.entry((from, to)).or_insert(0);
        let at = arrival.max(*last);
        *last = at;
        Some(at)
    }
}
