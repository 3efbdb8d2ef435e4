//! Experiment harness: presets, workloads, metrics and checker plumbing
//! around the `causalkv` simulator.

pub mod experiment;
pub mod metrics;
pub mod preset;
pub mod workload;

pub use experiment::{run, CaseRun, ExperimentError, Report};
pub use metrics::{Metrics, Summary};
pub use preset::{Preset, PresetName};
