//! Deterministic discrete-event simulator.
//!
//! Simulated time is in microseconds; physical clocks read whole
//! milliseconds offset by a per-server skew. Events are processed in
//! `(time, insertion order)` order, so a run is a pure function of its
//! configuration and workload.

pub mod config;
pub mod network;
pub mod runner;
pub mod trace;
pub mod workload;

pub use config::{Cut, Latency, LinkSpec, SimConfig, SlowServer, TraceLevel};
pub use runner::{simulate, OpRecord, RunResult, RunStats, SimError, StabilityViolation};
pub use trace::{EventKind, RunInfo, StateAssert, TraceEvent};
pub use workload::{ClientProgram, ClientSpec, Script, Step};
