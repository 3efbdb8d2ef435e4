//! Audits that need message-level traces: FIFO delivery per channel and
//! monotonicity of the stability state servers and clients expose.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::hlc::HlcTimestamp;
use crate::message::Message;
use crate::node::NodeId;
use crate::sim::trace::{EventKind, TraceEvent};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FifoViolation {
    pub from: NodeId,
    pub to: NodeId,
    /// Trace sequence number of the out-of-order receive.
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonotonicityViolation {
    pub actor: NodeId,
    pub field: String,
    pub seq: u64,
    /// Index into the vector, or the replica of a dependency entry.
    pub entry: u16,
    pub before: HlcTimestamp,
    pub after: Option<HlcTimestamp>,
}

pub fn check_fifo(events: &[TraceEvent]) -> Vec<FifoViolation> {
    let mut channels: BTreeMap<(NodeId, NodeId), VecDeque<&Message>> = BTreeMap::new();
    let mut out = Vec::new();
    for e in events {
        match &e.kind {
            EventKind::MsgSend {
                to,
                deliver_at: Some(_),
                msg,
            } => channels.entry((e.actor, *to)).or_default().push_back(msg),
            EventKind::MsgRecv { from, msg } => {
                let head = channels.entry((*from, e.actor)).or_default().pop_front();
                if head != Some(msg) {
                    out.push(FifoViolation {
                        from: *from,
                        to: e.actor,
                        seq: e.seq,
                    });
                }
            }
            _ => {}
        }
    }
    out
}

/// Sparse view of a vector-like value: `(entry, timestamp)` pairs.
type Entries = Vec<(u16, HlcTimestamp)>;

fn dense(v: &[HlcTimestamp]) -> Entries {
    v.iter().enumerate().map(|(i, t)| (i as u16, *t)).collect()
}

/// Values an actor exposes that must never go backwards.
fn exposed(msg: &Message) -> Vec<(&'static str, Entries)> {
    match msg {
        Message::GetReply { dsv, .. } | Message::RotxReply { dsv, .. } => {
            vec![("dsv", dense(dsv.entries()))]
        }
        Message::SliceReq { sv, .. } => vec![("dsv", dense(sv.entries()))],
        Message::GetReq { dsv, .. } => vec![("dsv", dense(dsv.entries()))],
        Message::PutReq { ds, .. } => vec![("ds", ds.iter().map(|(r, t)| (r.0, t)).collect())],
        Message::Rotx { dsv, ds, .. } => vec![
            ("dsv", dense(dsv.entries())),
            ("ds", ds.iter().map(|(r, t)| (r.0, t)).collect()),
        ],
        Message::GrGetReply { gst, .. } | Message::GrRotxReply { gst, .. } => {
            vec![("gst", vec![(0, *gst)])]
        }
        Message::GrSliceReq { snapshot, .. } => vec![("gst", vec![(0, *snapshot)])],
        Message::GrGetReq { gst, .. } => vec![("gst", vec![(0, *gst)])],
        Message::GrPutReq { dt, .. } => vec![("dt", vec![(0, *dt)])],
        Message::GrRotx { dt, gst, .. } => vec![("dt", vec![(0, *dt)]), ("gst", vec![(0, *gst)])],
        _ => Vec::new(),
    }
}

pub fn check_monotonicity(events: &[TraceEvent]) -> Vec<MonotonicityViolation> {
    let mut last: BTreeMap<(NodeId, &'static str), Entries> = BTreeMap::new();
    let mut out = Vec::new();
    for e in events {
        let EventKind::MsgSend { msg, .. } = &e.kind else {
            continue;
        };
        for (field, now) in exposed(msg) {
            if let Some(before) = last.get(&(e.actor, field)) {
                for (entry, b) in before {
                    let after = now.iter().find(|(i, _)| i == entry).map(|(_, t)| *t);
                    if after.is_none_or(|a| a < *b) {
                        out.push(MonotonicityViolation {
                            actor: e.actor,
                            field: field.to_string(),
                            seq: e.seq,
                            entry: *entry,
                            before: *b,
                            after,
                        });
                    }
                }
            }
            last.insert((e.actor, field), now);
        }
    }
    out
}
