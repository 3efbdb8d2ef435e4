//! Client operations recovered from a trace.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::message::RequestId;
use crate::model::{Key, ReplicaId, Stamp};
use crate::node::{Op, Outcome, SimTime};
use crate::sim::trace::{EventKind, RunInfo, StateAssert, TraceEvent, Winner};
use crate::checker::CheckError;

/// A version identity. Stamps are only unique per key: two partitions of
/// one replica may hand out the same timestamp.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct WriteId {
    pub key: Key,
    pub stamp: Stamp,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpEntry {
    pub client: u32,
    pub replica: ReplicaId,
    pub req: RequestId,
    pub op: Op,
    pub outcome: Outcome,
    pub start_seq: u64,
    pub end_seq: u64,
    pub start_us: SimTime,
    pub end_us: SimTime,
}

impl OpEntry {
    /// `(key, returned version)` for each key this operation read.
    pub fn reads(&self) -> Vec<(Key, Option<Stamp>)> {
        match &self.outcome {
            Outcome::Get { key, item, .. } => vec![(key.clone(), *item)],
            Outcome::Rotx { items } => items.iter().map(|i| (i.key.clone(), i.item)).collect(),
            Outcome::Put { .. } => Vec::new(),
        }
    }

    pub fn write(&self) -> Option<WriteId> {
        match &self.outcome {
            Outcome::Put { key, stamp } => Some(WriteId {
                key: key.clone(),
                stamp: *stamp,
            }),
            _ => None,
        }
    }

    pub fn is_get(&self) -> bool {
        matches!(self.op, Op::Get { .. })
    }

    pub fn is_rotx(&self) -> bool {
        matches!(self.op, Op::Rotx { .. })
    }
}

#[derive(Debug, Clone, Default)]
pub struct History {
    pub info: Option<RunInfo>,
    /// Completed operations in start order.
    pub ops: Vec<OpEntry>,
    /// Final per-server winners: `(replica, winners)`.
    pub finals: Vec<(ReplicaId, Vec<Winner>)>,
    pub stability_violations: Option<u64>,
    pub max_counter: Option<u64>,
    /// Index of the operation that produced each version.
    pub writers: BTreeMap<WriteId, usize>,
}

impl History {
    pub fn from_events(events: &[TraceEvent]) -> Result<Self, CheckError> {
        let mut h = History::default();
        let mut open: BTreeMap<(u32, RequestId), (ReplicaId, Op, u64, SimTime)> = BTreeMap::new();
        let mut done: Vec<OpEntry> = Vec::new();
        for e in events {
            match &e.kind {
                EventKind::RunStart { info } => {
                    if h.info.is_some() {
                        return Err(CheckError::Malformed("more than one run".into()));
                    }
                    h.info = Some(info.clone());
                }
                EventKind::OpStart {
                    client,
                    replica,
                    req,
                    op,
                } => {
                    let prev = open.insert((*client, *req), (*replica, op.clone(), e.seq, e.time_us));
                    if prev.is_some() {
                        return Err(CheckError::Malformed(format!("request {req:?} started twice")));
                    }
                }
                EventKind::OpEnd {
                    client,
                    req,
                    outcome,
                } => {
                    let (replica, op, start_seq, start_us) = open
                        .remove(&(*client, *req))
                        .ok_or_else(|| CheckError::Malformed(format!("request {req:?} ended without starting")))?;
                    done.push(OpEntry {
                        client: *client,
                        replica,
                        req: *req,
                        op,
                        outcome: outcome.clone(),
                        start_seq,
                        end_seq: e.seq,
                        start_us,
                        end_us: e.time_us,
                    });
                }
                EventKind::StateAssert { check } => match check {
                    StateAssert::FinalState { replica, winners } => {
                        h.finals.push((*replica, winners.clone()));
                    }
                    StateAssert::StabilityAudit { violations } => {
                        h.stability_violations = Some(*violations);
                    }
                    StateAssert::MaxCounter { value } => h.max_counter = Some(*value),
                },
                _ => {}
            }
        }
        done.sort_by_key(|o| o.start_seq);
        for (i, o) in done.iter().enumerate() {
            if let Some(w) = o.write() {
                if h.writers.insert(w.clone(), i).is_some() {
                    return Err(CheckError::Malformed(format!(
                        "version {} of {} written twice",
                        w.stamp, w.key
                    )));
                }
            }
        }
        h.ops = done;
        Ok(h)
    }
}
