//! Sticky client session for the HLC/DSV protocol.
//!
//! The session carries the client's dependency set and its copy of the
//! stable vector, attaches them to every request, and folds replies back
//! in. Neither ever decreases.

use crate::message::{Message, RequestId};
use crate::model::{DependencySet, ReplicaId, StableVector, Stamp};
use crate::node::{coordinator_for, ClientError, Op, Outcome, ServerId, Session, Topology};

#[derive(Debug, Clone)]
pub struct ClientSession {
    home: ReplicaId,
    topology: Topology,
    ds: DependencySet,
    dsv: StableVector,
}

impl ClientSession {
    pub fn new(home: ReplicaId, topology: Topology) -> Self {
        ClientSession {
            home,
            topology,
            ds: DependencySet::new(),
            dsv: StableVector::zero(topology.replicas as usize),
        }
    }

    pub fn ds(&self) -> &DependencySet {
        &self.ds
    }

    pub fn dsv(&self) -> &StableVector {
        &self.dsv
    }

    /// Request for `op` addressed to an explicit replica. Anything other
    /// than the home replica is refused.
    pub fn request_at(
        &self,
        target: ReplicaId,
        req: RequestId,
        op: &Op,
    ) -> Result<(ServerId, Message), ClientError> {
        self.check_target(target)?;
        let server = |p| ServerId::new(target, p);
        Ok(match op {
            Op::Get { key } => (
                server(self.topology.partition_of(key)),
                Message::GetReq {
                    req,
                    key: key.clone(),
                    dsv: self.dsv.clone(),
                },
            ),
            Op::Put { key, value } => (
                server(self.topology.partition_of(key)),
                Message::PutReq {
                    req,
                    key: key.clone(),
                    value: value.clone(),
                    ds: self.ds.clone(),
                },
            ),
            Op::Rotx { keys } => {
                let p = coordinator_for(&self.topology, keys).ok_or(ClientError::EmptyTransaction)?;
                (
                    server(p),
                    Message::Rotx {
                        req,
                        keys: keys.clone(),
                        dsv: self.dsv.clone(),
                        ds: self.ds.clone(),
                    },
                )
            }
        })
    }
}

impl Session for ClientSession {
    fn home(&self) -> ReplicaId {
        self.home
    }

    fn request(&mut self, req: RequestId, op: &Op) -> Result<(ServerId, Message), ClientError> {
        self.request_at(self.home, req, op)
    }

    fn complete(&mut self, op: &Op, reply: Message) -> Result<Outcome, ClientError> {
        match (op, reply) {
            (
                Op::Get { key },
                Message::GetReply {
                    value,
                    ds,
                    dsv,
                    item,
                    ..
                },
            ) => {
                self.dsv.join(&dsv)?;
                self.ds.merge(&ds);
                Ok(Outcome::Get {
                    key: key.clone(),
                    value,
                    item,
                })
            }
            (Op::Put { key, .. }, Message::PutReply { ut, sr, .. }) => {
                self.ds.include(sr, ut);
                Ok(Outcome::Put {
                    key: key.clone(),
                    stamp: Stamp { ut, sr },
                })
            }
            (Op::Rotx { .. }, Message::RotxReply { items, dsv, ds, .. }) => {
                self.dsv.join(&dsv)?;
                self.ds.merge(&ds);
                Ok(Outcome::Rotx { items })
            }
            (_, other) => Err(ClientError::UnexpectedReply { kind: other.kind() }),
        }
    }
}
