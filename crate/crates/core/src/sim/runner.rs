//! The event loop.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::ClientSession;
use crate::gentlerain::{GrConfig, GrServer, GrSession};
use crate::hlc::HlcTimestamp;
use crate::message::{Message, RequestId};
use crate::model::{ReplicaId, StableVector};
use crate::node::{
    physical_ms, ClientError, Ctx, Effect, NodeId, Note, Op, Outcome, Protocol, ProtocolError,
    ServerId, ServerNode, Session, SimTime, Timer,
};
use crate::server::{HlcDsvServer, ServerConfig};
use crate::sim::config::{ConfigError, SimConfig, TraceLevel};
use crate::sim::network::Network;
use crate::sim::trace::{EventKind, RunInfo, StateAssert, TraceEvent, Winner};
use crate::sim::workload::{ClientProgram, ClientSpec};

const CLIENT_PURPOSE: u64 = 0x636c_6965_6e74;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{at} at t={time_us}us: {source}")]
    Protocol {
        at: NodeId,
        time_us: SimTime,
        source: ProtocolError,
    },
    #[error("client c{client}: {source}")]
    Client { client: u32, source: ClientError },
    #[error("client c{client} got a reply for {got:?} while waiting for {want:?}")]
    StrayReply {
        client: u32,
        got: Option<RequestId>,
        want: Option<RequestId>,
    },
    #[error("clients still running at the time limit {0}us")]
    TimeLimit(SimTime),
}

/// One completed client operation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpRecord {
    pub client: u32,
    pub home: ReplicaId,
    pub req: RequestId,
    pub op: Op,
    pub start_us: SimTime,
    pub end_us: SimTime,
    pub outcome: Outcome,
}

impl OpRecord {
    pub fn latency_us(&self) -> u64 {
        self.end_us - self.start_us
    }
}

/// A stable-vector entry that claimed more than had been delivered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StabilityViolation {
    pub time_us: SimTime,
    pub server: NodeId,
    /// Source replica whose entry is too high.
    pub replica: ReplicaId,
    pub frontier: HlcTimestamp,
    /// Smallest update time from that replica not yet delivered here.
    pub undelivered: HlcTimestamp,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStats {
    /// Every PUT the server could not answer on arrival, with its wait.
    pub put_waits: Vec<(RequestId, u64)>,
    pub rotx_parked: u64,
    pub max_counter: u64,
    /// Largest `l - pt` seen at any handler, in milliseconds.
    pub max_clock_lead_ms: i64,
    pub stability_violations: Vec<StabilityViolation>,
    pub messages: BTreeMap<String, u64>,
    pub undeliverable: u64,
    pub clients_done_us: SimTime,
    pub end_us: SimTime,
}

#[derive(Debug)]
pub struct RunResult {
    pub info: RunInfo,
    pub trace: Vec<TraceEvent>,
    pub ops: Vec<OpRecord>,
    pub stats: RunStats,
}

enum Input {
    Deliver { from: NodeId, to: NodeId, msg: Message },
    Timer { server: ServerId, timer: Timer },
    Start { client: u32 },
    Issue { client: u32 },
}

struct Queued {
    at: SimTime,
    seq: u64,
    input: Input,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

struct ClientState {
    home: ReplicaId,
    session: Box<dyn Session>,
    program: Box<dyn ClientProgram>,
    rng: ChaCha8Rng,
    next_seq: u64,
    queued: Option<Op>,
    pending: Option<(RequestId, Op, SimTime)>,
    done: bool,
}

struct Sim<'a> {
    cfg: &'a SimConfig,
    now: SimTime,
    queue: BinaryHeap<Reverse<Queued>>,
    queue_seq: u64,
    trace_seq: u64,
    step: u64,
    trace: Vec<TraceEvent>,
    servers: Vec<Box<dyn ServerNode>>,
    frontiers: Vec<StableVector>,
    clients: Vec<ClientState>,
    homes: Vec<ReplicaId>,
    net: Network,
    /// Update times of replicates in flight, by (source, destination)
    /// replica.
    in_flight: BTreeMap<(ReplicaId, ReplicaId), BTreeMap<HlcTimestamp, u32>>,
    ops: Vec<OpRecord>,
    stats: RunStats,
}

pub fn simulate(cfg: &SimConfig, clients: Vec<ClientSpec>) -> Result<RunResult, SimError> {
    cfg.validate()?;
    let topo = cfg.topology;
    let servers: Vec<Box<dyn ServerNode>> = topo
        .servers()
        .map(|id| -> Box<dyn ServerNode> {
            match cfg.protocol {
                Protocol::HlcDsv => Box::new(HlcDsvServer::new(
                    id,
                    ServerConfig {
                        topology: topo,
                        timing: cfg.timing,
                        get_rule: cfg.get_rule,
                    },
                )),
                Protocol::GentleRain => Box::new(GrServer::new(
                    id,
                    GrConfig {
                        topology: topo,
                        timing: cfg.timing,
                    },
                )),
            }
        })
        .collect();
    let frontiers = servers.iter().map(|s| s.stable_frontier()).collect();
    let homes: Vec<ReplicaId> = clients.iter().map(|c| c.home).collect();
    let mut client_states = Vec::new();
    let mut starts = Vec::new();
    for (i, spec) in clients.into_iter().enumerate() {
        if spec.home.0 >= topo.replicas {
            return Err(SimError::Client {
                client: i as u32,
                source: ClientError::Stickiness {
                    home: spec.home,
                    target: spec.home,
                },
            });
        }
        let session: Box<dyn Session> = match cfg.protocol {
            Protocol::HlcDsv => Box::new(ClientSession::new(spec.home, topo)),
            Protocol::GentleRain => Box::new(GrSession::new(spec.home, topo)),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ CLIENT_PURPOSE);
        rng.set_stream(i as u64);
        starts.push(spec.start_us);
        client_states.push(ClientState {
            home: spec.home,
            session,
            program: spec.program,
            rng,
            next_seq: 0,
            queued: None,
            pending: None,
            done: false,
        });
    }

    let info = RunInfo {
        protocol: cfg.protocol,
        topology: topo,
        seed: cfg.seed,
        disconnected: cfg.disconnected(),
        full: cfg.trace_level != TraceLevel::Ops,
    };
    let mut sim = Sim {
        cfg,
        now: 0,
        queue: BinaryHeap::new(),
        queue_seq: 0,
        trace_seq: 0,
        step: 0,
        trace: Vec::new(),
        servers,
        frontiers,
        clients: client_states,
        homes,
        net: Network::new(cfg.seed),
        in_flight: BTreeMap::new(),
        ops: Vec::new(),
        stats: RunStats::default(),
    };
    let first = NodeId::Server(topo.servers().next().expect("non-empty"));
    sim.record(first, EventKind::RunStart { info: info.clone() });
    sim.run(starts)?;
    Ok(RunResult {
        info,
        trace: sim.trace,
        ops: sim.ops,
        stats: sim.stats,
    })
}

impl Sim<'_> {
    fn push(&mut self, at: SimTime, input: Input) {
        let seq = self.queue_seq;
        self.queue_seq += 1;
        self.queue.push(Reverse(Queued { at, seq, input }));
    }

    fn traces(&self, msg: &Message) -> bool {
        match self.cfg.trace_level {
            TraceLevel::Ops => false,
            TraceLevel::Foreground => !msg.is_background(),
            TraceLevel::Full => true,
        }
    }

    fn record(&mut self, actor: NodeId, kind: EventKind) {
        let seq = self.trace_seq;
        self.trace_seq += 1;
        self.trace.push(TraceEvent {
            seq,
            time_us: self.now,
            actor,
            step: self.step,
            kind,
        });
    }

    fn run(&mut self, starts: Vec<SimTime>) -> Result<(), SimError> {
        let topo = self.cfg.topology;
        for id in topo.servers().collect::<Vec<_>>() {
            let idx = topo.server_index(id);
            let mut ctx = Ctx::new(0, self.cfg.skew_of(id));
            self.servers[idx].start(&mut ctx);
            self.apply_effects(id, ctx.into_effects());
        }
        for (i, at) in starts.into_iter().enumerate() {
            self.push(at, Input::Start { client: i as u32 });
        }
        let mut remaining = self.clients.len();
        let mut end = if remaining == 0 {
            Some(self.cfg.drain_us())
        } else {
            None
        };
        while let Some(Reverse(next)) = self.queue.pop() {
            if let Some(e) = end {
                if next.at > e {
                    break;
                }
            } else if next.at > self.cfg.max_time_us {
                return Err(SimError::TimeLimit(self.cfg.max_time_us));
            }
            self.now = next.at;
            self.step += 1;
            match next.input {
                Input::Deliver { from, to, msg } => match to {
                    NodeId::Server(s) => self.server_message(s, from, msg)?,
                    NodeId::Client(c) => {
                        if self.client_reply(c, from, msg)? {
                            remaining -= 1;
                        }
                    }
                },
                Input::Timer { server, timer } => self.server_timer(server, timer)?,
                Input::Start { client } => {
                    if self.ask(client, None) {
                        remaining -= 1;
                    }
                }
                Input::Issue { client } => self.issue(client)?,
            }
            if remaining == 0 && end.is_none() {
                self.stats.clients_done_us = self.now;
                end = Some(self.now + self.cfg.drain_us());
            }
        }
        self.now = end.unwrap_or(self.now);
        self.stats.end_us = self.now;
        self.finish();
        Ok(())
    }

    fn finish(&mut self) {
        self.step += 1;
        let topo = self.cfg.topology;
        for id in topo.servers().collect::<Vec<_>>() {
            let node = &self.servers[topo.server_index(id)];
            let winners = node
                .store()
                .keys()
                .map(|k| Winner {
                    key: k.clone(),
                    item: node.visible_winner(k),
                })
                .collect();
            self.record(
                NodeId::Server(id),
                EventKind::StateAssert {
                    check: StateAssert::FinalState {
                        replica: id.replica,
                        winners,
                    },
                },
            );
        }
        let first = NodeId::Server(topo.servers().next().expect("non-empty"));
        let violations = self.stats.stability_violations.len() as u64;
        self.record(
            first,
            EventKind::StateAssert {
                check: StateAssert::StabilityAudit { violations },
            },
        );
        let value = self.stats.max_counter;
        self.record(
            first,
            EventKind::StateAssert {
                check: StateAssert::MaxCounter { value },
            },
        );
    }

    fn server_message(&mut self, s: ServerId, from: NodeId, msg: Message) -> Result<(), SimError> {
        let me = NodeId::Server(s);
        if let Some(v) = msg.replicated_version() {
            let key = (v.sr, s.replica);
            let slot = self.in_flight.entry(key).or_default();
            if let Some(n) = slot.get_mut(&v.ut) {
                *n -= 1;
                if *n == 0 {
                    slot.remove(&v.ut);
                }
            }
        }
        if self.traces(&msg) {
            self.record(
                me,
                EventKind::MsgRecv {
                    from,
                    msg: msg.clone(),
                },
            );
        }
        let idx = self.cfg.topology.server_index(s);
        let mut ctx = Ctx::new(self.now, self.cfg.skew_of(s));
        self.servers[idx]
            .on_message(from, msg, &mut ctx)
            .map_err(|source| SimError::Protocol {
                at: me,
                time_us: self.now,
                source,
            })?;
        self.apply_effects(s, ctx.into_effects());
        self.after_handler(s);
        Ok(())
    }

    fn server_timer(&mut self, s: ServerId, timer: Timer) -> Result<(), SimError> {
        let me = NodeId::Server(s);
        if self.cfg.trace_level == TraceLevel::Full {
            self.record(me, EventKind::Timer { timer });
        }
        let idx = self.cfg.topology.server_index(s);
        let mut ctx = Ctx::new(self.now, self.cfg.skew_of(s));
        self.servers[idx]
            .on_timer(timer, &mut ctx)
            .map_err(|source| SimError::Protocol {
                at: me,
                time_us: self.now,
                source,
            })?;
        self.apply_effects(s, ctx.into_effects());
        self.after_handler(s);
        Ok(())
    }

    fn after_handler(&mut self, s: ServerId) {
        let idx = self.cfg.topology.server_index(s);
        let node = &self.servers[idx];
        let clock = node.clock();
        self.stats.max_counter = self.stats.max_counter.max(clock.c);
        let pt = physical_ms(self.now, self.cfg.skew_of(s)) as i64;
        self.stats.max_clock_lead_ms = self.stats.max_clock_lead_ms.max(clock.l as i64 - pt);
        let frontier = node.stable_frontier();
        for (j, &f) in frontier.entries().iter().enumerate() {
            let j = ReplicaId(j as u16);
            if j == s.replica {
                continue;
            }
            if let Some((&undelivered, _)) = self
                .in_flight
                .get(&(j, s.replica))
                .and_then(|m| m.first_key_value())
            {
                if f >= undelivered {
                    self.stats.stability_violations.push(StabilityViolation {
                        time_us: self.now,
                        server: NodeId::Server(s),
                        replica: j,
                        frontier: f,
                        undelivered,
                    });
                }
            }
        }
        self.frontiers[idx] = frontier;
    }

    /// A new replicate from `source` must lie above every other replica's
    /// frontier entry for `source`.
    fn check_new_replicate(&mut self, source: ReplicaId, ut: HlcTimestamp) {
        let topo = self.cfg.topology;
        for id in topo.servers() {
            if id.replica == source {
                continue;
            }
            let f = self.frontiers[topo.server_index(id)].get(source);
            if f >= ut {
                self.stats.stability_violations.push(StabilityViolation {
                    time_us: self.now,
                    server: NodeId::Server(id),
                    replica: source,
                    frontier: f,
                    undelivered: ut,
                });
            }
        }
    }

    fn apply_effects(&mut self, s: ServerId, effects: Vec<Effect>) {
        let me = NodeId::Server(s);
        let mut fresh = Vec::new();
        for e in effects {
            match e {
                Effect::Send { to, msg } => {
                    if let (Some(v), NodeId::Server(dst)) = (msg.replicated_version(), to) {
                        if !fresh.contains(&v.ut) {
                            fresh.push(v.ut);
                        }
                        *self
                            .in_flight
                            .entry((v.sr, dst.replica))
                            .or_default()
                            .entry(v.ut)
                            .or_insert(0) += 1;
                    }
                    self.send(me, to, msg);
                }
                Effect::Schedule { at, timer } => {
                    self.push(at, Input::Timer { server: s, timer });
                }
                Effect::Note(Note::PutDeferred { req, wait_us }) => {
                    self.stats.put_waits.push((req, wait_us));
                    self.record(me, EventKind::PutDeferred { req, wait_us });
                }
                Effect::Note(Note::RotxParked { req }) => {
                    self.stats.rotx_parked += 1;
                    self.record(me, EventKind::RotxParked { req });
                }
            }
        }
        for ut in fresh {
            self.check_new_replicate(s.replica, ut);
        }
    }

    fn send(&mut self, from: NodeId, to: NodeId, msg: Message) {
        *self.stats.messages.entry(msg.kind().to_string()).or_insert(0) += 1;
        let at = self
            .net
            .delivery_time(self.cfg, &self.homes, from, to, self.now);
        if self.traces(&msg) {
            self.record(
                from,
                EventKind::MsgSend {
                    to,
                    deliver_at: at,
                    msg: msg.clone(),
                },
            );
        }
        match at {
            Some(at) => self.push(at, Input::Deliver { from, to, msg }),
            None => self.stats.undeliverable += 1,
        }
    }

    /// Asks the program for its next step. Returns true when it finished.
    fn ask(&mut self, client: u32, last: Option<&Outcome>) -> bool {
        let now = self.now;
        let c = &mut self.clients[client as usize];
        match c.program.next(last, now, &mut c.rng) {
            Some(step) => {
                c.queued = Some(step.op);
                self.push(now + step.delay_us, Input::Issue { client });
                false
            }
            None => {
                c.done = true;
                true
            }
        }
    }

    fn issue(&mut self, client: u32) -> Result<(), SimError> {
        let c = &mut self.clients[client as usize];
        let op = c.queued.take().expect("issue without a queued op");
        let req = RequestId {
            client,
            seq: c.next_seq,
        };
        c.next_seq += 1;
        let (server, msg) = c
            .session
            .request(req, &op)
            .map_err(|source| SimError::Client { client, source })?;
        let replica = c.home;
        c.pending = Some((req, op.clone(), self.now));
        self.record(
            NodeId::Client(client),
            EventKind::OpStart {
                client,
                replica,
                req,
                op,
            },
        );
        self.send(NodeId::Client(client), NodeId::Server(server), msg);
        Ok(())
    }

    /// Returns true when the client finished its program.
    fn client_reply(&mut self, client: u32, from: NodeId, msg: Message) -> Result<bool, SimError> {
        let me = NodeId::Client(client);
        if self.traces(&msg) {
            self.record(
                me,
                EventKind::MsgRecv {
                    from,
                    msg: msg.clone(),
                },
            );
        }
        let c = &mut self.clients[client as usize];
        let want = c.pending.as_ref().map(|p| p.0);
        if want.is_none() || msg.request_id() != want {
            return Err(SimError::StrayReply {
                client,
                got: msg.request_id(),
                want,
            });
        }
        let (req, op, start_us) = c.pending.take().expect("checked");
        let outcome = c
            .session
            .complete(&op, msg)
            .map_err(|source| SimError::Client { client, source })?;
        let home = c.home;
        self.record(
            me,
            EventKind::OpEnd {
                client,
                req,
                outcome: outcome.clone(),
            },
        );
        self.ops.push(OpRecord {
            client,
            home,
            req,
            op,
            start_us,
            end_us: self.now,
            outcome: outcome.clone(),
        });
        Ok(self.ask(client, Some(&outcome)))
    }
}
