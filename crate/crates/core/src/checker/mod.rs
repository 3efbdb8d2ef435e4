//! Offline consistency checker.
//!
//! Works on a trace alone: it rebuilds the client history, derives the
//! happens-before relation between operations and checks reads, snapshots
//! and final states against it. Full traces additionally get the
//! message-level audits.

pub mod audit;
pub mod consistency;
pub mod graph;
pub mod history;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::node::Protocol;
use crate::sim::trace::{split_runs, TraceError, TraceEvent};

pub use audit::{check_fifo, check_monotonicity, FifoViolation, MonotonicityViolation};
pub use consistency::{
    check_causal_pp, check_convergence, check_rotx_snapshots, ConvergenceViolation, Rule,
    SnapshotViolation, VisibilityViolation,
};
pub use graph::{brute_force_dep_pairs, DependencyGraph};
pub use history::{History, OpEntry, WriteId};

#[derive(Debug, Error)]
pub enum CheckError {
    #[error("malformed trace: {0}")]
    Malformed(String),
    #[error("read of a version nobody wrote: {} {}", .0.key, .0.stamp)]
    UnknownVersion(WriteId),
    #[error("happens-before relation has a cycle")]
    Cycle,
    #[error(transparent)]
    Trace(#[from] TraceError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub pass: bool,
    pub protocol: Option<Protocol>,
    pub seed: Option<u64>,
    pub ops: usize,
    pub causal: Vec<VisibilityViolation>,
    pub rotx: Vec<SnapshotViolation>,
    pub convergence: Vec<ConvergenceViolation>,
    /// `None` when the trace has no message records.
    pub fifo: Option<Vec<FifoViolation>>,
    pub monotonicity: Option<Vec<MonotonicityViolation>>,
    pub stability_violations: Option<u64>,
    pub max_counter: Option<u64>,
}

impl Verdict {
    /// One-line human summary.
    pub fn summary(&self) -> String {
        format!(
            "{} ops={} causal={} rotx={} convergence={} fifo={} monotonicity={} stability={}",
            if self.pass { "PASS" } else { "FAIL" },
            self.ops,
            self.causal.len(),
            self.rotx.len(),
            self.convergence.len(),
            count(self.fifo.as_ref().map(Vec::len)),
            count(self.monotonicity.as_ref().map(Vec::len)),
            count(self.stability_violations.map(|v| v as usize)),
        )
    }
}

fn count(n: Option<usize>) -> String {
    n.map_or_else(|| "-".to_string(), |n| n.to_string())
}

/// Checks a single-run trace.
pub fn check(events: &[TraceEvent]) -> Result<Verdict, CheckError> {
    let h = History::from_events(events)?;
    let g = DependencyGraph::build(&h)?;
    let causal = check_causal_pp(&h, &g);
    let rotx = check_rotx_snapshots(&h, &g);
    let convergence = check_convergence(&h);
    let full = match &h.info {
        Some(info) => info.full,
        None => events
            .iter()
            .any(|e| matches!(e.kind, crate::sim::trace::EventKind::MsgSend { .. })),
    };
    let (fifo, monotonicity) = if full {
        (Some(check_fifo(events)), Some(check_monotonicity(events)))
    } else {
        (None, None)
    };
    let pass = causal.is_empty()
        && rotx.is_empty()
        && convergence.is_empty()
        && fifo.as_ref().is_none_or(Vec::is_empty)
        && monotonicity.as_ref().is_none_or(Vec::is_empty)
        && h.stability_violations.unwrap_or(0) == 0;
    Ok(Verdict {
        pass,
        protocol: h.info.as_ref().map(|i| i.protocol),
        seed: h.info.as_ref().map(|i| i.seed),
        ops: h.ops.len(),
        causal,
        rotx,
        convergence,
        fifo,
        monotonicity,
        stability_violations: h.stability_violations,
        max_counter: h.max_counter,
    })
}

/// Checks every run of a trace that may hold several.
pub fn check_runs(events: Vec<TraceEvent>) -> Result<Vec<Verdict>, CheckError> {
    split_runs(events).iter().map(|run| check(run)).collect()
}
