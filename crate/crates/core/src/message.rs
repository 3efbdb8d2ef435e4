//! Wire messages exchanged between clients and partitions, for both the
//! HLC/DSV protocol and the GentleRain baseline.
//!
//! Replies that return a version also carry its [`Stamp`] in `item`. The
//! protocols never read it; it exists so traces identify exactly which
//! version a read observed.

use serde::{Deserialize, Serialize};

use crate::hlc::HlcTimestamp;
use crate::model::{DependencySet, Key, ReplicaId, StableVector, Stamp, Value, Version};

/// Client-local request id; unique per client.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RequestId {
    pub client: u32,
    pub seq: u64,
}

/// One key's result inside a transaction reply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadItem {
    pub key: Key,
    pub value: Option<Value>,
    pub item: Option<Stamp>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    GetReq {
        req: RequestId,
        key: Key,
        dsv: StableVector,
    },
    GetReply {
        req: RequestId,
        value: Option<Value>,
        ds: DependencySet,
        dsv: StableVector,
        item: Option<Stamp>,
    },
    PutReq {
        req: RequestId,
        key: Key,
        value: Value,
        ds: DependencySet,
    },
    PutReply {
        req: RequestId,
        ut: HlcTimestamp,
        sr: ReplicaId,
    },
    Replicate {
        version: Version,
    },
    Heartbeat {
        hlc: HlcTimestamp,
    },
    Rotx {
        req: RequestId,
        keys: Vec<Key>,
        dsv: StableVector,
        ds: DependencySet,
    },
    RotxReply {
        req: RequestId,
        items: Vec<ReadItem>,
        dsv: StableVector,
        ds: DependencySet,
    },
    SliceReq {
        txn: u64,
        key: Key,
        sv: StableVector,
    },
    SliceReply {
        txn: u64,
        key: Key,
        value: Option<Value>,
        ds: DependencySet,
        item: Option<Stamp>,
    },
    DsvShare {
        round: u64,
        vv: StableVector,
    },
    DsvInstall {
        round: u64,
        dsv: StableVector,
    },

    GrPutReq {
        req: RequestId,
        key: Key,
        value: Value,
        dt: HlcTimestamp,
    },
    GrPutReply {
        req: RequestId,
        ut: HlcTimestamp,
    },
    GrGetReq {
        req: RequestId,
        key: Key,
        gst: HlcTimestamp,
    },
    GrGetReply {
        req: RequestId,
        value: Option<Value>,
        item: Option<Stamp>,
        gst: HlcTimestamp,
    },
    GrReplicate {
        version: Version,
    },
    GrHeartbeat {
        ts: HlcTimestamp,
    },
    GrGstShare {
        round: u64,
        ts: HlcTimestamp,
    },
    GrGstInstall {
        round: u64,
        gst: HlcTimestamp,
    },
    GrRotx {
        req: RequestId,
        keys: Vec<Key>,
        dt: HlcTimestamp,
        gst: HlcTimestamp,
    },
    GrRotxReply {
        req: RequestId,
        items: Vec<ReadItem>,
        gst: HlcTimestamp,
    },
    GrSliceReq {
        txn: u64,
        key: Key,
        snapshot: HlcTimestamp,
    },
    GrSliceReply {
        txn: u64,
        key: Key,
        value: Option<Value>,
        item: Option<Stamp>,
    },
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::GetReq { .. } => "get_req",
            Message::GetReply { .. } => "get_reply",
            Message::PutReq { .. } => "put_req",
            Message::PutReply { .. } => "put_reply",
            Message::Replicate { .. } => "replicate",
            Message::Heartbeat { .. } => "heartbeat",
            Message::Rotx { .. } => "rotx",
            Message::RotxReply { .. } => "rotx_reply",
            Message::SliceReq { .. } => "slice_req",
            Message::SliceReply { .. } => "slice_reply",
            Message::DsvShare { .. } => "dsv_share",
            Message::DsvInstall { .. } => "dsv_install",
            Message::GrPutReq { .. } => "gr_put_req",
            Message::GrPutReply { .. } => "gr_put_reply",
            Message::GrGetReq { .. } => "gr_get_req",
            Message::GrGetReply { .. } => "gr_get_reply",
            Message::GrReplicate { .. } => "gr_replicate",
            Message::GrHeartbeat { .. } => "gr_heartbeat",
            Message::GrGstShare { .. } => "gr_gst_share",
            Message::GrGstInstall { .. } => "gr_gst_install",
            Message::GrRotx { .. } => "gr_rotx",
            Message::GrRotxReply { .. } => "gr_rotx_reply",
            Message::GrSliceReq { .. } => "gr_slice_req",
            Message::GrSliceReply { .. } => "gr_slice_reply",
        }
    }

    /// Periodic traffic that exists whether or not clients are active.
    pub fn is_background(&self) -> bool {
        matches!(
            self,
            Message::Heartbeat { .. }
                | Message::DsvShare { .. }
                | Message::DsvInstall { .. }
                | Message::GrHeartbeat { .. }
                | Message::GrGstShare { .. }
                | Message::GrGstInstall { .. }
        )
    }

    /// The replicated version, for either protocol.
    pub fn replicated_version(&self) -> Option<&Version> {
        match self {
            Message::Replicate { version } | Message::GrReplicate { version } => Some(version),
            _ => None,
        }
    }

    /// Request id for client-facing requests and replies.
    pub fn request_id(&self) -> Option<RequestId> {
        match self {
            Message::GetReq { req, .. }
            | Message::GetReply { req, .. }
            | Message::PutReq { req, .. }
            | Message::PutReply { req, .. }
            | Message::Rotx { req, .. }
            | Message::RotxReply { req, .. }
            | Message::GrPutReq { req, .. }
            | Message::GrPutReply { req, .. }
            | Message::GrGetReq { req, .. }
            | Message::GrGetReply { req, .. }
            | Message::GrRotx { req, .. }
            | Message::GrRotxReply { req, .. } => Some(*req),
            _ => None,
        }
    }
}
