//! Causal++ visibility, transaction snapshots and convergence.
//!
//! Versions are compared with last-writer-wins on `(ut, sr)`; a read that
//! returned nothing stands for the initial state, which every real version
//! beats.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::checker::graph::DependencyGraph;
use crate::checker::history::{History, WriteId};
use crate::message::RequestId;
use crate::model::{Key, ReplicaId, Stamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    /// A version in the reader's causal past was not visible.
    Causal,
    /// A version already written at the reader's replica was not visible.
    Immediate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisibilityViolation {
    pub client: u32,
    pub req: RequestId,
    pub rule: Rule,
    pub key: Key,
    pub expected: Stamp,
    pub returned: Option<Stamp>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotViolation {
    pub client: u32,
    pub req: RequestId,
    /// Returned version whose dependency was missed.
    pub source: WriteId,
    pub key: Key,
    pub expected: Stamp,
    pub returned: Option<Stamp>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvergenceViolation {
    pub key: Key,
    pub a: ReplicaId,
    pub b: ReplicaId,
    pub a_item: Option<Stamp>,
    pub b_item: Option<Stamp>,
}

/// Newest write of `key` among `ops`.
fn newest_of(h: &History, ops: impl Iterator<Item = usize>, key: &Key) -> Option<Stamp> {
    ops.filter_map(|i| h.ops[i].write())
        .filter(|w| w.key == *key)
        .map(|w| w.stamp)
        .max()
}

/// Causal+ for GET and ROTX reads, plus immediate visibility of local
/// writes for GETs. At most one violation per (read, key).
pub fn check_causal_pp(h: &History, g: &DependencyGraph) -> Vec<VisibilityViolation> {
    // Writes per (replica, key), ordered by completion.
    let mut local: BTreeMap<(ReplicaId, Key), Vec<(u64, Stamp)>> = BTreeMap::new();
    for o in &h.ops {
        if let Some(w) = o.write() {
            local
                .entry((o.replica, w.key))
                .or_default()
                .push((o.end_seq, w.stamp));
        }
    }
    let mut out = Vec::new();
    for (i, o) in h.ops.iter().enumerate() {
        for (key, returned) in o.reads() {
            let causal = newest_of(h, g.ancestors(i), &key);
            let immediate = if o.is_get() {
                local
                    .get(&(o.replica, key.clone()))
                    .and_then(|ws| {
                        ws.iter()
                            .filter(|(end, _)| *end < o.start_seq)
                            .map(|(_, s)| *s)
                            .max()
                    })
            } else {
                None
            };
            let violation = [(Rule::Causal, causal), (Rule::Immediate, immediate)]
                .into_iter()
                .filter_map(|(rule, want)| want.map(|w| (rule, w)))
                .filter(|(_, want)| returned < Some(*want))
                .max_by_key(|(rule, want)| (*want, *rule == Rule::Causal));
            if let Some((rule, expected)) = violation {
                out.push(VisibilityViolation {
                    client: o.client,
                    req: o.req,
                    rule,
                    key,
                    expected,
                    returned,
                });
            }
        }
    }
    out
}

/// Every version a transaction returned must come with everything it
/// depends on among the transaction's keys.
pub fn check_rotx_snapshots(h: &History, g: &DependencyGraph) -> Vec<SnapshotViolation> {
    let mut out = Vec::new();
    for o in h.ops.iter().filter(|o| o.is_rotx()) {
        let reads: BTreeMap<Key, Option<Stamp>> = o.reads().into_iter().collect();
        for (k1, item) in &reads {
            let Some(stamp) = item else { continue };
            let source = WriteId {
                key: k1.clone(),
                stamp: *stamp,
            };
            let Some(&writer) = h.writers.get(&source) else {
                continue;
            };
            for (k2, returned) in &reads {
                if let Some(expected) = newest_of(h, g.ancestors(writer), k2) {
                    if *returned < Some(expected) {
                        out.push(SnapshotViolation {
                            client: o.client,
                            req: o.req,
                            source: source.clone(),
                            key: k2.clone(),
                            expected,
                            returned: *returned,
                        });
                    }
                }
            }
        }
    }
    out
}

/// Replicas that end up hearing from the same set of replicas must agree on
/// every key's winner. Without a permanent cut that is every pair.
pub fn check_convergence(h: &History) -> Vec<ConvergenceViolation> {
    let disconnected: BTreeSet<(u16, u16)> = h
        .info
        .as_ref()
        .map(|i| i.disconnected.iter().copied().collect())
        .unwrap_or_default();
    let replicas: BTreeSet<ReplicaId> = h.finals.iter().map(|(r, _)| *r).collect();
    let mut by_key: BTreeMap<Key, BTreeMap<ReplicaId, Option<Stamp>>> = BTreeMap::new();
    for (r, winners) in &h.finals {
        for w in winners {
            by_key.entry(w.key.clone()).or_default().insert(*r, w.item);
        }
    }
    let heard = |r: &ReplicaId| -> BTreeSet<u16> {
        replicas
            .iter()
            .map(|x| x.0)
            .filter(|x| !disconnected.contains(&(r.0.min(*x), r.0.max(*x))))
            .collect()
    };
    let mut out = Vec::new();
    for (key, seen) in by_key {
        let item = |r: &ReplicaId| seen.get(r).copied().flatten();
        for a in &replicas {
            for b in replicas.range(*a..).skip(1) {
                if heard(a) != heard(b) {
                    continue;
                }
                if item(a) != item(b) {
                    out.push(ConvergenceViolation {
                        key: key.clone(),
                        a: *a,
                        b: *b,
                        a_item: item(a),
                        b_item: item(b),
                    });
                }
            }
        }
    }
    out
}
