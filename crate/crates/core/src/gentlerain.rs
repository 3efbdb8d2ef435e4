//! GentleRain baseline on the same substrate.
//!
//! Timestamps are physical milliseconds with a per-server sequence number
//! to break ties, carried in an [`HlcTimestamp`] so both protocols share
//! storage and trace formats. Unlike an HLC the clock never absorbs
//! timestamps from elsewhere, so a PUT whose dependency lies in this
//! server's physical future has to wait for the clock to pass it.
//! Stability is a single scalar, the global stable time (GST).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::hlc::{tick_local, HlcTimestamp};
use crate::message::{Message, ReadItem, RequestId};
use crate::model::{Key, PartitionId, ReplicaId, StableVector, Stamp, Value, Version};
use crate::node::{
    coordinator_for, ClientError, Ctx, NodeId, Note, Op, Outcome, ProtocolError, ServerId,
    ServerNode, Session, SimTime, Timer, Topology,
};
use crate::server::Timing;
use crate::storage::Store;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrConfig {
    pub topology: Topology,
    pub timing: Timing,
}

#[derive(Debug)]
struct ParkedPut {
    client: NodeId,
    req: RequestId,
    key: Key,
    value: Value,
    dt: HlcTimestamp,
}

#[derive(Debug)]
struct ParkedTxn {
    client: NodeId,
    req: RequestId,
    keys: Vec<Key>,
    dt: HlcTimestamp,
}

#[derive(Debug)]
struct PendingTxn {
    client: NodeId,
    req: RequestId,
    keys: Vec<Key>,
    awaiting: usize,
    results: BTreeMap<Key, (Option<Value>, Option<Stamp>)>,
}

#[derive(Debug)]
pub struct GrServer {
    id: ServerId,
    config: GrConfig,
    clock: HlcTimestamp,
    vv: StableVector,
    gst: HlcTimestamp,
    store: Store,
    last_replicate: Option<SimTime>,
    parked_puts: BTreeMap<u64, ParkedPut>,
    next_token: u64,
    parked_txns: Vec<ParkedTxn>,
    pending: BTreeMap<u64, PendingTxn>,
    next_txn: u64,
    round: u64,
    rounds: BTreeMap<u64, (usize, HlcTimestamp)>,
}

impl GrServer {
    pub fn new(id: ServerId, config: GrConfig) -> Self {
        GrServer {
            id,
            config,
            clock: HlcTimestamp::ZERO,
            vv: StableVector::zero(config.topology.replicas as usize),
            gst: HlcTimestamp::ZERO,
            store: Store::new(),
            last_replicate: None,
            parked_puts: BTreeMap::new(),
            next_token: 0,
            parked_txns: Vec::new(),
            pending: BTreeMap::new(),
            next_txn: 0,
            round: 0,
            rounds: BTreeMap::new(),
        }
    }

    pub fn gst(&self) -> HlcTimestamp {
        self.gst
    }

    pub fn vv(&self) -> &StableVector {
        &self.vv
    }

    fn me(&self) -> ReplicaId {
        self.id.replica
    }

    fn node(&self) -> NodeId {
        NodeId::Server(self.id)
    }

    fn local(&self, partition: PartitionId) -> ServerId {
        ServerId::new(self.id.replica, partition)
    }

    fn check_key(&self, key: &Key) -> Result<(), ProtocolError> {
        if self.config.topology.partition_of(key) != self.id.partition {
            return Err(ProtocolError::WrongPartition {
                key: key.clone(),
                at: self.node(),
            });
        }
        Ok(())
    }

    fn unexpected(&self, from: NodeId, msg: &Message) -> ProtocolError {
        ProtocolError::Unexpected {
            from,
            at: self.node(),
            kind: msg.kind(),
        }
    }

    /// Promise that no later local write gets a timestamp at or below the
    /// returned value.
    fn stable_local(&mut self, pc: u64) -> HlcTimestamp {
        self.clock = self.clock.max(HlcTimestamp::new(pc, 0));
        let me = self.me();
        self.vv.set(me, self.clock);
        self.clock
    }

    fn visible(&self, key: &Key) -> Option<&Version> {
        let me = self.me();
        let gst = self.gst;
        self.store
            .latest_where(key, |d| d.sr == me || d.ut <= gst)
    }

    fn apply_put(
        &mut self,
        client: NodeId,
        req: RequestId,
        key: Key,
        value: Value,
        ctx: &mut Ctx,
    ) -> Result<(), ProtocolError> {
        let me = self.me();
        let ut = tick_local(self.clock, ctx.physical_ms())?;
        self.clock = ut;
        self.vv.set(me, ut);
        let d = Version {
            key,
            value,
            ut,
            sr: me,
            ds: Default::default(),
        };
        self.store.insert(d.clone());
        ctx.send(client, Message::GrPutReply { req, ut });
        for peer in self.config.topology.peers(self.id) {
            ctx.send(peer, Message::GrReplicate { version: d.clone() });
        }
        if self.config.topology.replicas > 1 {
            self.last_replicate = Some(ctx.now());
        }
        Ok(())
    }

    fn handle_put(
        &mut self,
        from: NodeId,
        req: RequestId,
        key: Key,
        value: Value,
        dt: HlcTimestamp,
        ctx: &mut Ctx,
    ) -> Result<(), ProtocolError> {
        self.check_key(&key)?;
        if ctx.physical_ms() > dt.l {
            return self.apply_put(from, req, key, value, ctx);
        }
        let wake = ctx.earliest_physical_above(dt.l);
        let token = self.next_token;
        self.next_token += 1;
        self.parked_puts.insert(
            token,
            ParkedPut {
                client: from,
                req,
                key,
                value,
                dt,
            },
        );
        ctx.note(Note::PutDeferred {
            req,
            wait_us: wake - ctx.now(),
        });
        ctx.schedule(wake, Timer::WakePut { token });
        Ok(())
    }

    fn wake_put(&mut self, token: u64, ctx: &mut Ctx) -> Result<(), ProtocolError> {
        let Some(p) = self.parked_puts.remove(&token) else {
            return Ok(());
        };
        if ctx.physical_ms() <= p.dt.l {
            let wake = ctx.earliest_physical_above(p.dt.l);
            self.parked_puts.insert(token, p);
            ctx.schedule(wake, Timer::WakePut { token });
            return Ok(());
        }
        self.apply_put(p.client, p.req, p.key, p.value, ctx)
    }

    fn raise_gst(&mut self, gst: HlcTimestamp, ctx: &mut Ctx) {
        if gst <= self.gst {
            return;
        }
        self.gst = gst;
        let ready: Vec<ParkedTxn>;
        (ready, self.parked_txns) = std::mem::take(&mut self.parked_txns)
            .into_iter()
            .partition(|t| t.dt <= gst);
        for t in ready {
            self.start_txn(t.client, t.req, t.keys, ctx);
        }
    }

    fn start_txn(&mut self, client: NodeId, req: RequestId, keys: Vec<Key>, ctx: &mut Ctx) {
        let snapshot = self.gst;
        let txn = self.next_txn;
        self.next_txn += 1;
        let distinct: BTreeSet<Key> = keys.iter().cloned().collect();
        self.pending.insert(
            txn,
            PendingTxn {
                client,
                req,
                keys,
                awaiting: distinct.len(),
                results: BTreeMap::new(),
            },
        );
        let topo = self.config.topology;
        for key in distinct {
            let to = self.local(topo.partition_of(&key));
            ctx.send(to, Message::GrSliceReq { txn, key, snapshot });
        }
    }

    fn handle_rotx(
        &mut self,
        from: NodeId,
        req: RequestId,
        keys: Vec<Key>,
        dt: HlcTimestamp,
        gst: HlcTimestamp,
        ctx: &mut Ctx,
    ) -> Result<(), ProtocolError> {
        if keys.is_empty() {
            return Err(ProtocolError::EmptyTransaction);
        }
        let topo = self.config.topology;
        if !keys.iter().any(|k| topo.partition_of(k) == self.id.partition) {
            return Err(ProtocolError::WrongPartition {
                key: keys[0].clone(),
                at: self.node(),
            });
        }
        self.raise_gst(gst, ctx);
        if dt > self.gst {
            ctx.note(Note::RotxParked { req });
            self.parked_txns.push(ParkedTxn {
                client: from,
                req,
                keys,
                dt,
            });
        } else {
            self.start_txn(from, req, keys, ctx);
        }
        Ok(())
    }

    fn handle_slice_reply(
        &mut self,
        txn: u64,
        key: Key,
        value: Option<Value>,
        item: Option<Stamp>,
        ctx: &mut Ctx,
    ) -> Result<(), ProtocolError> {
        let p = self
            .pending
            .get_mut(&txn)
            .ok_or(ProtocolError::UnknownTxn(txn))?;
        if p.results.insert(key, (value, item)).is_none() {
            p.awaiting -= 1;
        }
        if p.awaiting > 0 {
            return Ok(());
        }
        let p = self.pending.remove(&txn).expect("present");
        let items = p
            .keys
            .iter()
            .map(|k| {
                let (value, item) = p.results[k].clone();
                ReadItem {
                    key: k.clone(),
                    value,
                    item,
                }
            })
            .collect();
        ctx.send(
            p.client,
            Message::GrRotxReply {
                req: p.req,
                items,
                gst: self.gst,
            },
        );
        Ok(())
    }

    fn peer_replica(&self, from: NodeId, msg: &Message) -> Result<ReplicaId, ProtocolError> {
        match from {
            NodeId::Server(s) if s.partition == self.id.partition && s.replica != self.me() => {
                Ok(s.replica)
            }
            _ => Err(self.unexpected(from, msg)),
        }
    }

    fn advance_vv(&mut self, from: NodeId, k: ReplicaId, kind: &'static str, ts: HlcTimestamp) -> Result<(), ProtocolError> {
        let have = self.vv.get(k);
        if ts < have {
            return Err(ProtocolError::OutOfOrder {
                from,
                kind,
                got: ts,
                have,
            });
        }
        self.vv.set(k, ts);
        Ok(())
    }

    fn handle_share(&mut self, round: u64, ts: HlcTimestamp, ctx: &mut Ctx) {
        let n = self.config.topology.partitions as usize;
        let entry = self.rounds.entry(round).or_insert((0, ts));
        entry.0 += 1;
        entry.1 = entry.1.min(ts);
        if entry.0 < n {
            return;
        }
        let (_, gst) = self.rounds.remove(&round).expect("present");
        for p in 0..self.config.topology.partitions {
            ctx.send(self.local(PartitionId(p)), Message::GrGstInstall { round, gst });
        }
    }

    fn heartbeat(&mut self, ctx: &mut Ctx) {
        let period = self.config.timing.heartbeat_us;
        let idle = self
            .last_replicate
            .is_none_or(|t| ctx.now().saturating_sub(t) >= period);
        if idle && self.config.topology.replicas > 1 {
            let ts = self.stable_local(ctx.physical_ms());
            for peer in self.config.topology.peers(self.id) {
                ctx.send(peer, Message::GrHeartbeat { ts });
            }
        }
        ctx.schedule(ctx.now() + period, Timer::Heartbeat);
    }

    fn stabilize(&mut self, ctx: &mut Ctx) {
        let local = self.stable_local(ctx.physical_ms());
        let me = self.me();
        let ts = self
            .vv
            .entries()
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != me.index())
            .map(|(_, t)| *t)
            .fold(local, HlcTimestamp::min);
        let round = self.round;
        self.round += 1;
        ctx.send(self.local(PartitionId(0)), Message::GrGstShare { round, ts });
        ctx.schedule(ctx.now() + self.config.timing.stabilize_us, Timer::Stabilize);
    }
}

impl ServerNode for GrServer {
    fn id(&self) -> ServerId {
        self.id
    }

    fn start(&mut self, ctx: &mut Ctx) {
        let t = self.config.timing;
        ctx.schedule(ctx.now() + t.heartbeat_us, Timer::Heartbeat);
        ctx.schedule(ctx.now() + t.stabilize_us, Timer::Stabilize);
    }

    fn on_message(&mut self, from: NodeId, msg: Message, ctx: &mut Ctx) -> Result<(), ProtocolError> {
        match msg {
            Message::GrPutReq {
                req,
                key,
                value,
                dt,
            } => self.handle_put(from, req, key, value, dt, ctx),
            Message::GrGetReq { req, key, gst } => {
                self.check_key(&key)?;
                self.raise_gst(gst, ctx);
                let d = self.visible(&key);
                let reply = Message::GrGetReply {
                    req,
                    value: d.map(|d| d.value.clone()),
                    item: d.map(Version::stamp),
                    gst: self.gst,
                };
                ctx.send(from, reply);
                Ok(())
            }
            Message::GrReplicate { ref version } => {
                let k = self.peer_replica(from, &msg)?;
                if version.sr != k {
                    return Err(self.unexpected(from, &msg));
                }
                self.check_key(&version.key)?;
                self.advance_vv(from, k, "gr_replicate", version.ut)?;
                let Message::GrReplicate { version } = msg else {
                    unreachable!()
                };
                self.store.insert(version);
                Ok(())
            }
            Message::GrHeartbeat { ts } => {
                let k = self.peer_replica(from, &msg)?;
                self.advance_vv(from, k, "gr_heartbeat", ts)
            }
            Message::GrRotx { req, keys, dt, gst } => self.handle_rotx(from, req, keys, dt, gst, ctx),
            Message::GrSliceReq { txn, key, snapshot } => {
                self.check_key(&key)?;
                self.raise_gst(snapshot, ctx);
                let d = self.store.latest_where(&key, |d| d.ut <= snapshot);
                let reply = Message::GrSliceReply {
                    txn,
                    key: key.clone(),
                    value: d.map(|d| d.value.clone()),
                    item: d.map(Version::stamp),
                };
                ctx.send(from, reply);
                Ok(())
            }
            Message::GrSliceReply {
                txn,
                key,
                value,
                item,
            } => self.handle_slice_reply(txn, key, value, item, ctx),
            Message::GrGstShare { round, ts } if self.id.partition == PartitionId(0) => {
                self.handle_share(round, ts, ctx);
                Ok(())
            }
            Message::GrGstInstall { gst, .. } => {
                self.raise_gst(gst, ctx);
                Ok(())
            }
            other => Err(self.unexpected(from, &other)),
        }
    }

    fn on_timer(&mut self, timer: Timer, ctx: &mut Ctx) -> Result<(), ProtocolError> {
        match timer {
            Timer::Heartbeat => self.heartbeat(ctx),
            Timer::Stabilize => self.stabilize(ctx),
            Timer::WakePut { token } => return self.wake_put(token, ctx),
        }
        Ok(())
    }

    fn clock(&self) -> HlcTimestamp {
        self.clock
    }

    fn stable_frontier(&self) -> StableVector {
        StableVector::from_entries(vec![self.gst; self.config.topology.replicas as usize])
    }

    fn store(&self) -> &Store {
        &self.store
    }

    fn visible_winner(&self, key: &Key) -> Option<Stamp> {
        self.visible(key).map(Version::stamp)
    }
}

/// GentleRain client: the largest timestamp it has read or written, and
/// the largest GST it has seen.
#[derive(Debug, Clone)]
pub struct GrSession {
    home: ReplicaId,
    topology: Topology,
    dt: HlcTimestamp,
    gst: HlcTimestamp,
}

impl GrSession {
    pub fn new(home: ReplicaId, topology: Topology) -> Self {
        GrSession {
            home,
            topology,
            dt: HlcTimestamp::ZERO,
            gst: HlcTimestamp::ZERO,
        }
    }

    pub fn dt(&self) -> HlcTimestamp {
        self.dt
    }

    pub fn gst(&self) -> HlcTimestamp {
        self.gst
    }

    fn observe(&mut self, item: Option<Stamp>) {
        if let Some(s) = item {
            self.dt = self.dt.max(s.ut);
        }
    }
}

impl Session for GrSession {
    fn home(&self) -> ReplicaId {
        self.home
    }

    fn request(&mut self, req: RequestId, op: &Op) -> Result<(ServerId, Message), ClientError> {
        let server = |p| ServerId::new(self.home, p);
        Ok(match op {
            Op::Get { key } => (
                server(self.topology.partition_of(key)),
                Message::GrGetReq {
                    req,
                    key: key.clone(),
                    gst: self.gst,
                },
            ),
            Op::Put { key, value } => (
                server(self.topology.partition_of(key)),
                Message::GrPutReq {
                    req,
                    key: key.clone(),
                    value: value.clone(),
                    dt: self.dt,
                },
            ),
            Op::Rotx { keys } => {
                let p = coordinator_for(&self.topology, keys).ok_or(ClientError::EmptyTransaction)?;
                (
                    server(p),
                    Message::GrRotx {
                        req,
                        keys: keys.clone(),
                        dt: self.dt,
                        gst: self.gst,
                    },
                )
            }
        })
    }

    fn complete(&mut self, op: &Op, reply: Message) -> Result<Outcome, ClientError> {
        match (op, reply) {
            (Op::Get { key }, Message::GrGetReply { value, item, gst, .. }) => {
                self.gst = self.gst.max(gst);
                self.observe(item);
                Ok(Outcome::Get {
                    key: key.clone(),
                    value,
                    item,
                })
            }
            (Op::Put { key, .. }, Message::GrPutReply { ut, .. }) => {
                self.dt = self.dt.max(ut);
                Ok(Outcome::Put {
                    key: key.clone(),
                    stamp: Stamp { ut, sr: self.home },
                })
            }
            (Op::Rotx { .. }, Message::GrRotxReply { items, gst, .. }) => {
                self.gst = self.gst.max(gst);
                for it in &items {
                    self.observe(it.item);
                }
                Ok(Outcome::Rotx { items })
            }
            (_, other) => Err(ClientError::UnexpectedReply { kind: other.kind() }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::node::Effect;

    fn ts(l: u64, c: u64) -> HlcTimestamp {
        HlcTimestamp::new(l, c)
    }

    fn req(seq: u64) -> RequestId {
        RequestId { client: 0, seq }
    }

    fn server(m: u16, replicas: u16) -> GrServer {
        GrServer::new(
            ServerId::new(ReplicaId(m), PartitionId(0)),
            GrConfig {
                topology: Topology::new(replicas, 1),
                timing: Timing::default(),
            },
        )
    }

    fn put(dt: HlcTimestamp) -> Message {
        Message::GrPutReq {
            req: req(0),
            key: "k".into(),
            value: "v".into(),
            dt,
        }
    }

    #[test]
    fn put_ahead_of_dependency_is_immediate() {
        let mut s = server(0, 2);
        let mut ctx = Ctx::new(20_000, 0);
        s.on_message(NodeId::Client(0), put(ts(10, 0)), &mut ctx).unwrap();
        let effects = ctx.into_effects();
        assert!(matches!(
            &effects[0],
            Effect::Send { msg: Message::GrPutReply { ut, .. }, .. } if *ut == ts(20, 0)
        ));
        assert!(matches!(&effects[1], Effect::Send { msg: Message::GrReplicate { .. }, .. }));
    }

    #[test]
    fn lagging_server_defers_put_until_clock_passes() {
        let mut s = server(0, 1);
        // Clock reads 7 ms, dependency at 10 ms: wait until it reads 11.
        let mut ctx = Ctx::new(12_000, -5_000);
        s.on_message(NodeId::Client(0), put(ts(10, 0)), &mut ctx).unwrap();
        let effects = ctx.into_effects();
        assert_eq!(
            effects[0],
            Effect::Note(Note::PutDeferred {
                req: req(0),
                wait_us: 4_000
            })
        );
        assert_eq!(
            effects[1],
            Effect::Schedule {
                at: 16_000,
                timer: Timer::WakePut { token: 0 }
            }
        );
        let mut ctx = Ctx::new(16_000, -5_000);
        s.on_timer(Timer::WakePut { token: 0 }, &mut ctx).unwrap();
        assert!(matches!(
            &ctx.effects()[0],
            Effect::Send { msg: Message::GrPutReply { ut, .. }, .. } if *ut == ts(11, 0)
        ));
    }

    #[test]
    fn timestamps_strictly_increase_within_a_tick() {
        let mut s = server(0, 1);
        let mut seen = Vec::new();
        for _ in 0..3 {
            let mut ctx = Ctx::new(5_000, 0);
            s.on_message(NodeId::Client(0), put(ts(0, 0)), &mut ctx).unwrap();
            if let Effect::Send {
                msg: Message::GrPutReply { ut, .. },
                ..
            } = &ctx.effects()[0]
            {
                seen.push(*ut);
            }
        }
        assert_eq!(seen, vec![ts(5, 0), ts(5, 1), ts(5, 2)]);
    }

    #[test]
    fn get_hides_remote_versions_above_gst() {
        let mut s = server(0, 2);
        let peer = NodeId::Server(ServerId::new(ReplicaId(1), PartitionId(0)));
        let remote = Version {
            key: "k".into(),
            value: "r".into(),
            ut: ts(9, 0),
            sr: ReplicaId(1),
            ds: Default::default(),
        };
        let mut ctx = Ctx::new(10_000, 0);
        s.on_message(peer, Message::GrReplicate { version: remote }, &mut ctx)
            .unwrap();
        assert_eq!(s.visible_winner(&"k".into()), None);
        s.on_message(
            NodeId::Client(0),
            Message::GrGetReq {
                req: req(1),
                key: "k".into(),
                gst: ts(9, 0),
            },
            &mut ctx,
        )
        .unwrap();
        assert_eq!(s.visible_winner(&"k".into()).map(|s| s.ut), Some(ts(9, 0)));
    }

    #[test]
    fn single_server_gst_tracks_local_clock() {
        let mut s = server(0, 1);
        let mut ctx = Ctx::new(7_000, 0);
        s.on_timer(Timer::Stabilize, &mut ctx).unwrap();
        let effects = ctx.into_effects();
        let Effect::Send {
            msg: Message::GrGstShare { round, ts: share },
            ..
        } = effects[0].clone()
        else {
            panic!("expected share")
        };
        let mut ctx = Ctx::new(7_000, 0);
        s.on_message(NodeId::Server(s.id()), Message::GrGstShare { round, ts: share }, &mut ctx)
            .unwrap();
        let install = ctx.into_effects().remove(0);
        let Effect::Send { msg, to } = install else {
            panic!()
        };
        let mut ctx = Ctx::new(7_000, 0);
        s.on_message(to, msg, &mut ctx).unwrap();
        assert_eq!(s.gst(), ts(7, 0));
    }

    #[test]
    fn slow_replica_pins_gst() {
        let mut s = server(0, 3);
        let peer = |m| NodeId::Server(ServerId::new(ReplicaId(m), PartitionId(0)));
        let mut ctx = Ctx::new(50_000, 0);
        s.on_message(peer(1), Message::GrHeartbeat { ts: ts(48, 0) }, &mut ctx)
            .unwrap();
        s.on_message(peer(2), Message::GrHeartbeat { ts: ts(3, 0) }, &mut ctx)
            .unwrap();
        s.on_timer(Timer::Stabilize, &mut ctx).unwrap();
        assert!(ctx.effects().iter().any(|e| matches!(
            e,
            Effect::Send { msg: Message::GrGstShare { ts: t, .. }, .. } if *t == ts(3, 0)
        )));
    }

    #[test]
    fn rotx_parks_until_gst_reaches_dependency() {
        let mut s = server(0, 1);
        let mut ctx = Ctx::new(5_000, 0);
        s.on_message(
            NodeId::Client(0),
            Message::GrRotx {
                req: req(3),
                keys: vec!["k".into()],
                dt: ts(4, 0),
                gst: ts(0, 0),
            },
            &mut ctx,
        )
        .unwrap();
        assert_eq!(ctx.effects(), &[Effect::Note(Note::RotxParked { req: req(3) })]);
        let mut ctx = Ctx::new(5_000, 0);
        s.on_message(
            NodeId::Server(s.id()),
            Message::GrGstInstall {
                round: 0,
                gst: ts(4, 0),
            },
            &mut ctx,
        )
        .unwrap();
        assert!(matches!(
            &ctx.effects()[0],
            Effect::Send { msg: Message::GrSliceReq { snapshot, .. }, .. } if *snapshot == ts(4, 0)
        ));
    }

    #[test]
    fn out_of_order_heartbeat_is_fatal() {
        let mut s = server(0, 2);
        let peer = NodeId::Server(ServerId::new(ReplicaId(1), PartitionId(0)));
        let mut ctx = Ctx::new(0, 0);
        s.on_message(peer, Message::GrHeartbeat { ts: ts(5, 0) }, &mut ctx)
            .unwrap();
        let err = s
            .on_message(peer, Message::GrHeartbeat { ts: ts(4, 0) }, &mut ctx)
            .unwrap_err();
        assert!(matches!(err, ProtocolError::OutOfOrder { .. }));
    }

    #[test]
    fn session_tracks_max_dependency_time() {
        let topo = Topology::new(1, 1);
        let mut c = GrSession::new(ReplicaId(0), topo);
        let op = Op::Get { key: "k".into() };
        c.complete(
            &op,
            Message::GrGetReply {
                req: req(0),
                value: Some("v".into()),
                item: Some(Stamp {
                    ut: ts(8, 1),
                    sr: ReplicaId(0),
                }),
                gst: ts(2, 0),
            },
        )
        .unwrap();
        assert_eq!(c.dt(), ts(8, 1));
        assert_eq!(c.gst(), ts(2, 0));
        let (_, msg) = c
            .request(
                req(1),
                &Op::Put {
                    key: "k".into(),
                    value: "w".into(),
                },
            )
            .unwrap();
        assert!(matches!(msg, Message::GrPutReq { dt, .. } if dt == ts(8, 1)));
    }
}
