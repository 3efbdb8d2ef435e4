//! Partition state machine for the HLC/DSV protocol.
//!
//! Every handler runs to completion without waiting on timers or clock
//! conditions: PUT replies in the same step it is handled, and a
//! transaction coordinator fans out slice reads immediately and answers
//! when the last one returns.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::hlc::{tick_local, tick_put, HlcTimestamp};
use crate::message::{Message, ReadItem, RequestId};
use crate::model::{
    visible_in_snapshot, DependencySet, Key, PartitionId, ReplicaId, StableVector,
    Stamp, Value, Version,
};
use crate::node::{Ctx, NodeId, ProtocolError, ServerId, ServerNode, SimTime, Timer, Topology};
use crate::storage::Store;

/// Which remote versions a GET may return.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GetRule {
    /// A remote version is returned once its dependencies are stable.
    Dependencies,
    /// A remote version is returned once its dependencies and the version
    /// itself are stable.
    ///
    /// Readers fold the returned version's own `(sr, ut)` into their
    /// dependency set, and later PUTs and transactions raise the server's
    /// stable vector with it. Under [`GetRule::Dependencies`] that can push
    /// an entry above what has actually been received.
    #[default]
    DependenciesAndSelf,
}

/// Periods of the background tasks, in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timing {
    pub stabilize_us: SimTime,
    pub heartbeat_us: SimTime,
}

impl Default for Timing {
    fn default() -> Self {
        Timing {
            stabilize_us: 5_000,
            heartbeat_us: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerConfig {
    pub topology: Topology,
    pub timing: Timing,
    pub get_rule: GetRule,
}

#[derive(Debug)]
struct PendingTxn {
    client: NodeId,
    req: RequestId,
    keys: Vec<Key>,
    awaiting: usize,
    results: BTreeMap<Key, (Option<Value>, Option<Stamp>)>,
    ds: DependencySet,
}

#[derive(Debug)]
struct Round {
    shares: usize,
    min: StableVector,
}

#[derive(Debug)]
pub struct HlcDsvServer {
    id: ServerId,
    config: ServerConfig,
    vv: StableVector,
    dsv: StableVector,
    store: Store,
    last_replicate: Option<SimTime>,
    pending: BTreeMap<u64, PendingTxn>,
    next_txn: u64,
    round: u64,
    rounds: BTreeMap<u64, Round>,
}

impl HlcDsvServer {
    pub fn new(id: ServerId, config: ServerConfig) -> Self {
        let m = config.topology.replicas as usize;
        HlcDsvServer {
            id,
            config,
            vv: StableVector::zero(m),
            dsv: StableVector::zero(m),
            store: Store::new(),
            last_replicate: None,
            pending: BTreeMap::new(),
            next_txn: 0,
            round: 0,
            rounds: BTreeMap::new(),
        }
    }

    pub fn vv(&self) -> &StableVector {
        &self.vv
    }

    pub fn dsv(&self) -> &StableVector {
        &self.dsv
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

    fn check_vector(&self, v: &StableVector) -> Result<(), ProtocolError> {
        if v.len() != self.vv.len() {
            return Err(crate::model::ModelError::LengthMismatch {
                left: self.vv.len(),
                right: v.len(),
            }
            .into());
        }
        Ok(())
    }

    fn get_visible(&self, key: &Key) -> Option<&Version> {
        let me = self.me();
        match self.config.get_rule {
            GetRule::Dependencies => self.store.read_visible(key, me, &self.dsv),
            GetRule::DependenciesAndSelf => self.store.latest_where(key, |d| {
                d.sr == me || visible_in_snapshot(d, &self.dsv)
            }),
        }
    }

    fn handle_get(&mut self, from: NodeId, req: RequestId, key: Key, dsv: StableVector, ctx: &mut Ctx) -> Result<(), ProtocolError> {
        self.check_key(&key)?;
        self.dsv.join(&dsv)?;
        let d = self.get_visible(&key);
        let reply = Message::GetReply {
            req,
            value: d.map(|d| d.value.clone()),
            ds: d.map(Version::ds_with_self).unwrap_or_default(),
            dsv: self.dsv.clone(),
            item: d.map(Version::stamp),
        };
        ctx.send(from, reply);
        Ok(())
    }

    fn handle_put(
        &mut self,
        from: NodeId,
        req: RequestId,
        key: Key,
        value: Value,
        ds: DependencySet,
        ctx: &mut Ctx,
    ) -> Result<(), ProtocolError> {
        self.check_key(&key)?;
        let me = self.me();
        self.dsv.join_ds(&ds)?;
        let dt = ds.max_value().unwrap_or_default().max(self.dsv.get(me));
        let ut = tick_put(self.vv.get(me), dt, ctx.physical_ms())?;
        self.vv.set(me, ut);
        let d = Version {
            key,
            value,
            ut,
            sr: me,
            ds,
        };
        self.store.insert(d.clone());
        ctx.send(from, Message::PutReply { req, ut, sr: me });
        for peer in self.config.topology.peers(self.id) {
            ctx.send(peer, Message::Replicate { version: d.clone() });
        }
        if self.config.topology.replicas > 1 {
            self.last_replicate = Some(ctx.now());
        }
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

    fn handle_rotx(
        &mut self,
        from: NodeId,
        req: RequestId,
        keys: Vec<Key>,
        dsv: StableVector,
        ds: DependencySet,
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
        self.dsv.join(&dsv)?;
        self.dsv.join_ds(&ds)?;
        let sv = self.dsv.clone();
        let txn = self.next_txn;
        self.next_txn += 1;
        let distinct: BTreeSet<Key> = keys.iter().cloned().collect();
        self.pending.insert(
            txn,
            PendingTxn {
                client: from,
                req,
                keys,
                awaiting: distinct.len(),
                results: BTreeMap::new(),
                ds,
            },
        );
        for key in distinct {
            let to = self.local(topo.partition_of(&key));
            ctx.send(
                to,
                Message::SliceReq {
                    txn,
                    key,
                    sv: sv.clone(),
                },
            );
        }
        Ok(())
    }

    fn handle_slice(&mut self, from: NodeId, txn: u64, key: Key, sv: StableVector, ctx: &mut Ctx) -> Result<(), ProtocolError> {
        self.check_key(&key)?;
        self.check_vector(&sv)?;
        let me = self.me();
        self.dsv.raise(me, sv.get(me));
        let d = self.store.read_snapshot(&key, &sv);
        let reply = Message::SliceReply {
            txn,
            key: key.clone(),
            value: d.map(|d| d.value.clone()),
            ds: d.map(Version::ds_with_self).unwrap_or_default(),
            item: d.map(Version::stamp),
        };
        ctx.send(from, reply);
        Ok(())
    }

    fn handle_slice_reply(
        &mut self,
        txn: u64,
        key: Key,
        value: Option<Value>,
        ds: DependencySet,
        item: Option<Stamp>,
        ctx: &mut Ctx,
    ) -> Result<(), ProtocolError> {
        let p = self
            .pending
            .get_mut(&txn)
            .ok_or(ProtocolError::UnknownTxn(txn))?;
        p.ds.merge(&ds);
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
            Message::RotxReply {
                req: p.req,
                items,
                dsv: self.dsv.clone(),
                ds: p.ds,
            },
        );
        Ok(())
    }

    fn handle_share(&mut self, round: u64, vv: StableVector, ctx: &mut Ctx) -> Result<(), ProtocolError> {
        self.check_vector(&vv)?;
        let n = self.config.topology.partitions as usize;
        let entry = self.rounds.entry(round).or_insert_with(|| Round {
            shares: 0,
            min: vv.clone(),
        });
        entry.min.meet(&vv)?;
        entry.shares += 1;
        if entry.shares < n {
            return Ok(());
        }
        let done = self.rounds.remove(&round).expect("present");
        for p in 0..self.config.topology.partitions {
            ctx.send(
                self.local(PartitionId(p)),
                Message::DsvInstall {
                    round,
                    dsv: done.min.clone(),
                },
            );
        }
        Ok(())
    }

    fn heartbeat(&mut self, ctx: &mut Ctx) -> Result<(), ProtocolError> {
        let period = self.config.timing.heartbeat_us;
        let idle = self
            .last_replicate
            .is_none_or(|t| ctx.now().saturating_sub(t) >= period);
        if idle && self.config.topology.replicas > 1 {
            let me = self.me();
            let hlc = tick_local(self.vv.get(me), ctx.physical_ms())?;
            self.vv.set(me, hlc);
            for peer in self.config.topology.peers(self.id) {
                ctx.send(peer, Message::Heartbeat { hlc });
            }
        }
        ctx.schedule(ctx.now() + period, Timer::Heartbeat);
        Ok(())
    }

    fn stabilize(&mut self, ctx: &mut Ctx) {
        let round = self.round;
        self.round += 1;
        ctx.send(
            self.local(PartitionId(0)),
            Message::DsvShare {
                round,
                vv: self.vv.clone(),
            },
        );
        ctx.schedule(ctx.now() + self.config.timing.stabilize_us, Timer::Stabilize);
    }
}

impl ServerNode for HlcDsvServer {
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
            Message::GetReq { req, key, dsv } => self.handle_get(from, req, key, dsv, ctx),
            Message::PutReq {
                req,
                key,
                value,
                ds,
            } => self.handle_put(from, req, key, value, ds, ctx),
            Message::Replicate { ref version } => {
                let k = self.peer_replica(from, &msg)?;
                if version.sr != k {
                    return Err(self.unexpected(from, &msg));
                }
                self.check_key(&version.key)?;
                self.advance_vv(from, k, "replicate", version.ut)?;
                let Message::Replicate { version } = msg else {
                    unreachable!()
                };
                self.store.insert(version);
                Ok(())
            }
            Message::Heartbeat { hlc } => {
                let k = self.peer_replica(from, &msg)?;
                self.advance_vv(from, k, "heartbeat", hlc)
            }
            Message::Rotx { req, keys, dsv, ds } => self.handle_rotx(from, req, keys, dsv, ds, ctx),
            Message::SliceReq { txn, key, sv } => self.handle_slice(from, txn, key, sv, ctx),
            Message::SliceReply {
                txn,
                key,
                value,
                ds,
                item,
            } => self.handle_slice_reply(txn, key, value, ds, item, ctx),
            Message::DsvShare { round, vv } if self.id.partition == PartitionId(0) => {
                self.handle_share(round, vv, ctx)
            }
            Message::DsvInstall { dsv, .. } => {
                self.dsv.join(&dsv)?;
                Ok(())
            }
            other => Err(self.unexpected(from, &other)),
        }
    }

    fn on_timer(&mut self, timer: Timer, ctx: &mut Ctx) -> Result<(), ProtocolError> {
        match timer {
            Timer::Heartbeat => self.heartbeat(ctx),
            Timer::Stabilize => {
                self.stabilize(ctx);
                Ok(())
            }
            Timer::WakePut { .. } => Ok(()),
        }
    }

    fn clock(&self) -> HlcTimestamp {
        self.vv.get(self.me())
    }

    fn stable_frontier(&self) -> StableVector {
        self.dsv.clone()
    }

    fn store(&self) -> &Store {
        &self.store
    }

    fn visible_winner(&self, key: &Key) -> Option<Stamp> {
        self.get_visible(key).map(Version::stamp)
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

    fn config(replicas: u16, partitions: u16) -> ServerConfig {
        ServerConfig {
            topology: Topology::new(replicas, partitions),
            timing: Timing::default(),
            get_rule: GetRule::default(),
        }
    }

    fn server(m: u16, n: u16, cfg: ServerConfig) -> HlcDsvServer {
        HlcDsvServer::new(ServerId::new(ReplicaId(m), PartitionId(n)), cfg)
    }

    fn sends(ctx: Ctx) -> Vec<(NodeId, Message)> {
        ctx.into_effects()
            .into_iter()
            .filter_map(|e| match e {
                Effect::Send { to, msg } => Some((to, msg)),
                _ => None,
            })
            .collect()
    }

    /// A key hosted by partition `n` of `cfg`.
    fn key_on(cfg: &ServerConfig, n: u16) -> Key {
        (0..)
            .map(|i| Key::from(format!("key{i}")))
            .find(|k| cfg.topology.partition_of(k) == PartitionId(n))
            .unwrap()
    }

    fn put_req(key: &Key, ds: DependencySet) -> Message {
        Message::PutReq {
            req: req(0),
            key: key.clone(),
            value: "v".into(),
            ds,
        }
    }

    #[test]
    fn fresh_get_of_absent_key() {
        let cfg = config(2, 1);
        let mut s = server(0, 0, cfg);
        let mut ctx = Ctx::new(0, 0);
        s.on_message(
            NodeId::Client(0),
            Message::GetReq {
                req: req(0),
                key: "k".into(),
                dsv: StableVector::zero(2),
            },
            &mut ctx,
        )
        .unwrap();
        let out = sends(ctx);
        assert_eq!(
            out[0].1,
            Message::GetReply {
                req: req(0),
                value: None,
                ds: DependencySet::new(),
                dsv: StableVector::zero(2),
                item: None
            }
        );
    }

    #[test]
    fn get_raises_dsv_from_client() {
        let cfg = config(2, 1);
        let mut s = server(0, 0, cfg);
        let mut ctx = Ctx::new(0, 0);
        let dsv = StableVector::from_entries(vec![ts(0, 0), ts(4, 0)]);
        s.on_message(
            NodeId::Client(0),
            Message::GetReq {
                req: req(0),
                key: "k".into(),
                dsv: dsv.clone(),
            },
            &mut ctx,
        )
        .unwrap();
        assert_eq!(s.dsv(), &dsv);
    }

    #[test]
    fn put_on_fresh_server_uses_physical_time() {
        let cfg = config(3, 1);
        let mut s = server(0, 0, cfg);
        let mut ctx = Ctx::new(5_000, 0);
        s.on_message(NodeId::Client(0), put_req(&"k".into(), DependencySet::new()), &mut ctx)
            .unwrap();
        let out = sends(ctx);
        assert_eq!(
            out[0].1,
            Message::PutReply {
                req: req(0),
                ut: ts(5, 0),
                sr: ReplicaId(0)
            }
        );
        let replicas: Vec<_> = out[1..].iter().map(|(to, _)| *to).collect();
        assert_eq!(replicas.len(), 2);
        assert!(out[1..]
            .iter()
            .all(|(_, m)| matches!(m, Message::Replicate { version } if version.ut == ts(5, 0))));
    }

    #[test]
    fn put_dominates_dependency_without_waiting() {
        let cfg = config(2, 1);
        let mut s = server(0, 0, cfg);
        s.vv.set(ReplicaId(0), ts(10, 1));
        s.dsv.set(ReplicaId(0), ts(10, 1));
        let ds = DependencySet::singleton(ReplicaId(1), ts(11, 3));
        let mut ctx = Ctx::new(10_000, 0);
        s.on_message(NodeId::Client(0), put_req(&"k".into(), ds), &mut ctx)
            .unwrap();
        let out = sends(ctx);
        assert!(matches!(out[0].1, Message::PutReply { ut, .. } if ut == ts(11, 4)));

        // Clock far behind the dependency: still answered in the same step.
        let mut ctx = Ctx::new(0, -1_000_000);
        let ds = DependencySet::singleton(ReplicaId(1), ts(500, 0));
        s.on_message(NodeId::Client(0), put_req(&"k".into(), ds), &mut ctx)
            .unwrap();
        let out = sends(ctx);
        assert!(matches!(out[0].1, Message::PutReply { ut, .. } if ut > ts(500, 0)));
    }

    #[test]
    fn local_version_is_always_visible() {
        let cfg = config(2, 1);
        let mut s = server(0, 0, cfg);
        let ds = DependencySet::singleton(ReplicaId(1), ts(90, 0));
        let mut ctx = Ctx::new(100_000, 0);
        s.on_message(NodeId::Client(0), put_req(&"k".into(), ds), &mut ctx)
            .unwrap();
        s.dsv = StableVector::zero(2);
        assert!(s.visible_winner(&"k".into()).is_some());
    }

    #[test]
    fn replicates_and_heartbeats_advance_vv() {
        let cfg = config(2, 1);
        let mut s = server(0, 0, cfg);
        let peer = NodeId::Server(ServerId::new(ReplicaId(1), PartitionId(0)));
        let d = |l| Version {
            key: "k".into(),
            value: "v".into(),
            ut: ts(l, 0),
            sr: ReplicaId(1),
            ds: DependencySet::new(),
        };
        let mut ctx = Ctx::new(0, 0);
        s.on_message(peer, Message::Replicate { version: d(7) }, &mut ctx)
            .unwrap();
        assert_eq!(s.vv().get(ReplicaId(1)), ts(7, 0));
        s.on_message(peer, Message::Replicate { version: d(9) }, &mut ctx)
            .unwrap();
        s.on_message(peer, Message::Replicate { version: d(9) }, &mut ctx)
            .unwrap();
        assert_eq!(s.vv().get(ReplicaId(1)), ts(9, 0));
        assert_eq!(s.store().version_count(), 2);
        s.on_message(peer, Message::Heartbeat { hlc: ts(12, 0) }, &mut ctx)
            .unwrap();
        assert_eq!(s.vv().get(ReplicaId(1)), ts(12, 0));
        let err = s
            .on_message(peer, Message::Heartbeat { hlc: ts(11, 0) }, &mut ctx)
            .unwrap_err();
        assert!(matches!(err, ProtocolError::OutOfOrder { .. }));
    }

    #[test]
    fn heartbeat_only_when_idle() {
        let cfg = config(3, 1);
        let mut s = server(0, 0, cfg);
        let mut ctx = Ctx::new(10_000, 0);
        s.on_timer(Timer::Heartbeat, &mut ctx).unwrap();
        assert_eq!(sends(ctx).len(), 2);

        let mut ctx = Ctx::new(15_000, 0);
        s.on_message(NodeId::Client(0), put_req(&"k".into(), DependencySet::new()), &mut ctx)
            .unwrap();
        let mut ctx = Ctx::new(20_000, 0);
        s.on_timer(Timer::Heartbeat, &mut ctx).unwrap();
        assert!(sends(ctx).is_empty());
    }

    fn run_round(servers: &mut [HlcDsvServer]) {
        let mut shares = Vec::new();
        for s in servers.iter_mut() {
            let mut ctx = Ctx::new(5_000, 0);
            s.on_timer(Timer::Stabilize, &mut ctx).unwrap();
            shares.extend(sends(ctx).into_iter().map(|(_, m)| (NodeId::Server(s.id()), m)));
        }
        let mut installs = Vec::new();
        for (from, m) in shares {
            let mut ctx = Ctx::new(5_000, 0);
            servers[0].on_message(from, m, &mut ctx).unwrap();
            installs.extend(sends(ctx));
        }
        assert_eq!(installs.len(), servers.len());
        for (to, m) in installs {
            let s = servers.iter_mut().find(|s| NodeId::Server(s.id()) == to).unwrap();
            let mut ctx = Ctx::new(5_000, 0);
            s.on_message(to, m, &mut ctx).unwrap();
        }
    }

    #[test]
    fn dsv_round_takes_entrywise_min_and_never_lowers() {
        let cfg = config(2, 2);
        let mut servers = [server(0, 0, cfg), server(0, 1, cfg)];
        servers[0].vv = StableVector::from_entries(vec![ts(9, 0), ts(5, 0)]);
        servers[1].vv = StableVector::from_entries(vec![ts(2, 0), ts(3, 0)]);
        run_round(&mut servers);
        for s in &servers {
            assert_eq!(s.dsv().entries(), &[ts(2, 0), ts(3, 0)]);
        }
        servers[1].vv = StableVector::from_entries(vec![ts(1, 0), ts(8, 0)]);
        servers[0].vv = StableVector::from_entries(vec![ts(9, 0), ts(8, 0)]);
        run_round(&mut servers);
        for s in &servers {
            assert_eq!(s.dsv().entries(), &[ts(2, 0), ts(8, 0)]);
        }
    }

    #[test]
    fn single_partition_round_installs_own_vv() {
        let cfg = config(2, 1);
        let mut servers = vec![server(0, 0, cfg)];
        servers[0].vv = StableVector::from_entries(vec![ts(4, 0), ts(6, 0)]);
        run_round(&mut servers);
        assert_eq!(servers[0].dsv(), servers[0].vv());
    }

    #[test]
    fn rotx_fans_out_one_slice_per_key_and_replies_once() {
        let cfg = config(2, 2);
        let k0 = key_on(&cfg, 0);
        let k1 = key_on(&cfg, 1);
        let mut servers = [server(0, 0, cfg), server(0, 1, cfg)];
        let client = NodeId::Client(0);
        let mut ctx = Ctx::new(0, 0);
        servers[0]
            .on_message(
                client,
                Message::Rotx {
                    req: req(0),
                    keys: vec![k1.clone(), k0.clone()],
                    dsv: StableVector::zero(2),
                    ds: DependencySet::new(),
                },
                &mut ctx,
            )
            .unwrap();
        let slices = sends(ctx);
        assert_eq!(slices.len(), 2);
        let mut replies = Vec::new();
        let coordinator = NodeId::Server(servers[0].id());
        for (to, m) in slices {
            let idx = to.server().unwrap().partition.index();
            let mut ctx = Ctx::new(0, 0);
            servers[idx]
                .on_message(coordinator, m, &mut ctx)
                .unwrap();
            replies.extend(sends(ctx));
        }
        let mut out = Vec::new();
        for (_, m) in replies {
            let mut ctx = Ctx::new(0, 0);
            servers[0].on_message(client, m, &mut ctx).unwrap();
            out.extend(sends(ctx));
        }
        assert_eq!(out.len(), 1);
        let Message::RotxReply { items, .. } = &out[0].1 else {
            panic!("expected reply")
        };
        let keys: Vec<_> = items.iter().map(|i| i.key.clone()).collect();
        assert_eq!(keys, vec![k1, k0]);
    }

    #[test]
    fn rotx_snapshot_includes_client_dependencies() {
        let cfg = config(2, 1);
        let mut s = server(0, 0, cfg);
        let mut ctx = Ctx::new(0, 0);
        let ds = DependencySet::singleton(ReplicaId(0), ts(3, 0));
        s.on_message(
            NodeId::Client(0),
            Message::Rotx {
                req: req(0),
                keys: vec!["k".into()],
                dsv: StableVector::zero(2),
                ds,
            },
            &mut ctx,
        )
        .unwrap();
        let out = sends(ctx);
        assert!(matches!(&out[0].1, Message::SliceReq { sv, .. } if sv.get(ReplicaId(0)) == ts(3, 0)));
    }

    #[test]
    fn slice_raises_own_dsv_entry_and_reads_snapshot() {
        let cfg = config(2, 1);
        let mut s = server(0, 0, cfg);
        let mut ctx = Ctx::new(6_000, 0);
        s.on_message(NodeId::Client(0), put_req(&"k".into(), DependencySet::new()), &mut ctx)
            .unwrap();
        let sv = StableVector::from_entries(vec![ts(5, 0), ts(0, 0)]);
        let mut ctx = Ctx::new(6_000, 0);
        s.on_message(
            NodeId::Server(s.id()),
            Message::SliceReq {
                txn: 0,
                key: "k".into(),
                sv,
            },
            &mut ctx,
        )
        .unwrap();
        assert_eq!(s.dsv().get(ReplicaId(0)), ts(5, 0));
        let out = sends(ctx);
        assert!(matches!(
            &out[0].1,
            Message::SliceReply { value: None, ds, .. } if ds.is_empty()
        ));
    }

    #[test]
    fn empty_and_misrouted_requests_are_rejected() {
        let cfg = config(1, 2);
        let k1 = key_on(&cfg, 1);
        let mut s = server(0, 0, cfg);
        let mut ctx = Ctx::new(0, 0);
        let err = s
            .on_message(
                NodeId::Client(0),
                Message::Rotx {
                    req: req(0),
                    keys: vec![],
                    dsv: StableVector::zero(1),
                    ds: DependencySet::new(),
                },
                &mut ctx,
            )
            .unwrap_err();
        assert!(matches!(err, ProtocolError::EmptyTransaction));
        let err = s
            .on_message(NodeId::Client(0), put_req(&k1, DependencySet::new()), &mut ctx)
            .unwrap_err();
        assert!(matches!(err, ProtocolError::WrongPartition { .. }));
    }

    #[test]
    fn get_rule_decides_unstable_remote_versions() {
        let remote = Version {
            key: "k".into(),
            value: "r".into(),
            ut: ts(9, 0),
            sr: ReplicaId(1),
            ds: DependencySet::new(),
        };
        let peer = NodeId::Server(ServerId::new(ReplicaId(1), PartitionId(0)));
        for (rule, visible) in [(GetRule::Dependencies, true), (GetRule::DependenciesAndSelf, false)] {
            let mut cfg = config(2, 1);
            cfg.get_rule = rule;
            let mut s = server(0, 0, cfg);
            let mut ctx = Ctx::new(0, 0);
            s.on_message(peer, Message::Replicate { version: remote.clone() }, &mut ctx)
                .unwrap();
            assert_eq!(s.visible_winner(&"k".into()).is_some(), visible, "{rule:?}");
        }
    }
}
