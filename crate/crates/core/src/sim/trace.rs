//! Trace records and their JSON-lines form.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::message::{Message, RequestId};
use crate::model::{Key, ReplicaId, Stamp};
use crate::node::{NodeId, Op, Outcome, Protocol, SimTime, Timer, Topology};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub seq: u64,
    pub time_us: SimTime,
    pub actor: NodeId,
    /// Handler invocation that produced the event; shared by everything a
    /// single message or timer caused.
    pub step: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunInfo {
    pub protocol: Protocol,
    pub topology: Topology,
    pub seed: u64,
    /// Replica pairs that were never reconnected.
    pub disconnected: Vec<(u16, u16)>,
    /// Client and replication messages are recorded.
    pub full: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Winner {
    pub key: Key,
    pub item: Option<Stamp>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "assert", rename_all = "kebab-case")]
pub enum StateAssert {
    /// What a fresh reader sees at one server once the run has drained.
    FinalState {
        replica: ReplicaId,
        winners: Vec<Winner>,
    },
    /// Ground-truth stability audit from the simulator.
    StabilityAudit { violations: u64 },
    /// Largest logical counter seen in any clock.
    MaxCounter { value: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EventKind {
    RunStart {
        info: RunInfo,
    },
    OpStart {
        client: u32,
        replica: ReplicaId,
        req: RequestId,
        #[serde(flatten)]
        op: Op,
    },
    OpEnd {
        client: u32,
        req: RequestId,
        outcome: Outcome,
    },
    MsgSend {
        to: NodeId,
        deliver_at: Option<SimTime>,
        msg: Message,
    },
    MsgRecv {
        from: NodeId,
        msg: Message,
    },
    Timer {
        timer: Timer,
    },
    PutDeferred {
        req: RequestId,
        wait_us: u64,
    },
    RotxParked {
        req: RequestId,
    },
    StateAssert {
        #[serde(flatten)]
        check: StateAssert,
    },
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn write_jsonl<W: Write>(mut w: W, events: &[TraceEvent]) -> io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn to_jsonl(events: &[TraceEvent]) -> String {
    let mut buf = Vec::new();
    write_jsonl(&mut buf, events).expect("writing to memory");
    String::from_utf8(buf).expect("json is utf-8")
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<TraceEvent>, TraceError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e = serde_json::from_str(&line).map_err(|source| TraceError::Parse {
            line: i + 1,
            source,
        })?;
        out.push(e);
    }
    Ok(out)
}

/// Splits a multi-run trace at each `run-start` record.
pub fn split_runs(events: Vec<TraceEvent>) -> Vec<Vec<TraceEvent>> {
    let mut runs: Vec<Vec<TraceEvent>> = Vec::new();
    for e in events {
        if matches!(e.kind, EventKind::RunStart { .. }) || runs.is_empty() {
            runs.push(Vec::new());
        }
        runs.last_mut().expect("pushed").push(e);
    }
    runs
}
