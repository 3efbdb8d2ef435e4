//! Client programs: what each simulated client does next.

use rand_chacha::ChaCha8Rng;

use crate::model::ReplicaId;
use crate::node::{Op, Outcome, SimTime};

/// Issue `op` after waiting `delay_us` from when the previous operation
/// completed (or from the client's start).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub delay_us: SimTime,
    pub op: Op,
}

impl Step {
    pub fn now(op: Op) -> Self {
        Step { delay_us: 0, op }
    }

    pub fn after(delay_us: SimTime, op: Op) -> Self {
        Step { delay_us, op }
    }
}

pub trait ClientProgram {
    /// Next operation given the outcome of the previous one, or `None`
    /// when finished.
    fn next(&mut self, last: Option<&Outcome>, now: SimTime, rng: &mut ChaCha8Rng) -> Option<Step>;
}

/// A fixed list of steps, ignoring outcomes.
#[derive(Debug, Clone, Default)]
pub struct Script {
    steps: std::collections::VecDeque<Step>,
}

impl Script {
    pub fn new(steps: impl IntoIterator<Item = Step>) -> Self {
        Script {
            steps: steps.into_iter().collect(),
        }
    }
}

impl ClientProgram for Script {
    fn next(&mut self, _: Option<&Outcome>, _: SimTime, _: &mut ChaCha8Rng) -> Option<Step> {
        self.steps.pop_front()
    }
}

/// A program plus where and when it runs.
pub struct ClientSpec {
    pub home: ReplicaId,
    pub start_us: SimTime,
    pub program: Box<dyn ClientProgram>,
}

impl ClientSpec {
    pub fn new(home: ReplicaId, start_us: SimTime, program: impl ClientProgram + 'static) -> Self {
        ClientSpec {
            home,
            start_us,
            program: Box::new(program),
        }
    }
}

impl std::fmt::Debug for ClientSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClientSpec")
            .field("home", &self.home)
            .field("start_us", &self.start_us)
            .finish_non_exhaustive()
    }
}
