//! Shared domain types: replica and partition ids, keys and values,
//! dependency sets, stable vectors, versions, and the pure functions over
//! them (dependency merge, last-writer-wins, visibility predicates).

use std::collections::BTreeMap;
use std::fmt;

use serde::de::{SeqAccess, Visitor};
use serde::ser::SerializeSeq;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::hlc::HlcTimestamp;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("stable vector length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("replica {replica} outside a vector of length {len}")]
    ReplicaOutOfRange { replica: ReplicaId, len: usize },
    #[error("last-writer-wins between different keys {a} and {b}")]
    KeyMismatch { a: Key, b: Key },
}

/// Data center index `m` in `[0, M)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReplicaId(pub u16);

/// Partition index `n` in `[0, N)`, identical across replicas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PartitionId(pub u16);

impl ReplicaId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl PartitionId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ReplicaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

impl fmt::Display for PartitionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

/// Opaque byte string. Serialized as a JSON string when it is valid UTF-8
/// and as an array of bytes otherwise.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Bytes(pub Vec<u8>);

impl Bytes {
    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn as_str(&self) -> Option<&str> {
        std::str::from_utf8(&self.0).ok()
    }
}

impl fmt::Debug for Bytes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.as_str() {
            Some(s) => write!(f, "{s:?}"),
            None => write!(f, "{:?}", self.0),
        }
    }
}

impl fmt::Display for Bytes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.as_str() {
            Some(s) => f.write_str(s),
            None => write!(f, "{:?}", self.0),
        }
    }
}

impl From<&str> for Bytes {
    fn from(s: &str) -> Self {
        Bytes(s.as_bytes().to_vec())
    }
}

impl From<String> for Bytes {
    fn from(s: String) -> Self {
        Bytes(s.into_bytes())
    }
}

impl From<Vec<u8>> for Bytes {
    fn from(v: Vec<u8>) -> Self {
        Bytes(v)
    }
}

impl Serialize for Bytes {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self.as_str() {
            Some(s) => serializer.serialize_str(s),
            None => self.0.serialize(serializer),
        }
    }
}

impl<'de> Deserialize<'de> for Bytes {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Text(String),
            Raw(Vec<u8>),
        }
        Ok(match Repr::deserialize(deserializer)? {
            Repr::Text(s) => Bytes(s.into_bytes()),
            Repr::Raw(v) => Bytes(v),
        })
    }
}

pub type Key = Bytes;
pub type Value = Bytes;

/// Identity of a version: its update time and source replica. Ordered
/// lexicographically, which is exactly the last-writer-wins order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Stamp {
    pub ut: HlcTimestamp,
    pub sr: ReplicaId,
}

impl fmt::Display for Stamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.ut, self.sr)
    }
}

/// Partial map replica -> timestamp, at most one entry per replica.
///
/// Serialized as an array of `[replica, encoded-hlc]` pairs sorted by
/// replica.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct DependencySet(BTreeMap<ReplicaId, HlcTimestamp>);

impl DependencySet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn singleton(replica: ReplicaId, ts: HlcTimestamp) -> Self {
        let mut ds = Self::new();
        ds.0.insert(replica, ts);
        ds
    }

    pub fn get(&self, replica: ReplicaId) -> Option<HlcTimestamp> {
        self.0.get(&replica).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ReplicaId, HlcTimestamp)> + '_ {
        self.0.iter().map(|(r, t)| (*r, *t))
    }

    /// Raises the entry for `replica` to at least `ts`, adding it when absent.
    pub fn include(&mut self, replica: ReplicaId, ts: HlcTimestamp) {
        let slot = self.0.entry(replica).or_insert(ts);
        if ts > *slot {
            *slot = ts;
        }
    }

    /// In-place entry-wise maximum.
    pub fn merge(&mut self, other: &DependencySet) {
        for (r, t) in other.iter() {
            self.include(r, t);
        }
    }

    /// Largest timestamp in the set.
    pub fn max_value(&self) -> Option<HlcTimestamp> {
        self.0.values().copied().max()
    }
}

impl FromIterator<(ReplicaId, HlcTimestamp)> for DependencySet {
    fn from_iter<I: IntoIterator<Item = (ReplicaId, HlcTimestamp)>>(iter: I) -> Self {
        let mut ds = DependencySet::new();
        for (r, t) in iter {
            ds.include(r, t);
        }
        ds
    }
}

impl Serialize for DependencySet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.0.len()))?;
        for (r, t) in self.iter() {
            seq.serialize_element(&(r, t))?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for DependencySet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct PairsVisitor;

        impl<'de> Visitor<'de> for PairsVisitor {
            type Value = DependencySet;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an array of [replica, hlc] pairs")
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Self::Value, A::Error> {
                let mut ds = DependencySet::new();
                while let Some((r, t)) = seq.next_element::<(ReplicaId, HlcTimestamp)>()? {
                    if ds.0.insert(r, t).is_some() {
                        return Err(serde::de::Error::custom(format!(
                            "duplicate dependency entry for replica {r}"
                        )));
                    }
                }
                Ok(ds)
            }
        }

        deserializer.deserialize_seq(PairsVisitor)
    }
}

/// Entry-wise maximum of two dependency sets over the union of their keys.
pub fn max_ds(a: &DependencySet, b: &DependencySet) -> DependencySet {
    let mut out = a.clone();
    out.merge(b);
    out
}

/// Length-M vector of timestamps, one entry per replica.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StableVector(Vec<HlcTimestamp>);

impl StableVector {
    pub fn zero(replicas: usize) -> Self {
        StableVector(vec![HlcTimestamp::ZERO; replicas])
    }

    pub fn from_entries(entries: Vec<HlcTimestamp>) -> Self {
        StableVector(entries)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn entries(&self) -> &[HlcTimestamp] {
        &self.0
    }

    pub fn get(&self, replica: ReplicaId) -> HlcTimestamp {
        self.0[replica.index()]
    }

    pub fn set(&mut self, replica: ReplicaId, ts: HlcTimestamp) {
        self.0[replica.index()] = ts;
    }

    /// Raises one entry; never lowers it.
    pub fn raise(&mut self, replica: ReplicaId, ts: HlcTimestamp) {
        let slot = &mut self.0[replica.index()];
        if ts > *slot {
            *slot = ts;
        }
    }

    /// In-place entry-wise maximum.
    pub fn join(&mut self, other: &StableVector) -> Result<(), ModelError> {
        self.check_len(other.len())?;
        for (mine, theirs) in self.0.iter_mut().zip(&other.0) {
            if theirs > mine {
                *mine = *theirs;
            }
        }
        Ok(())
    }

    /// In-place entry-wise minimum.
    pub fn meet(&mut self, other: &StableVector) -> Result<(), ModelError> {
        self.check_len(other.len())?;
        for (mine, theirs) in self.0.iter_mut().zip(&other.0) {
            if theirs < mine {
                *mine = *theirs;
            }
        }
        Ok(())
    }

    /// Raises only the entries named in `ds`.
    pub fn join_ds(&mut self, ds: &DependencySet) -> Result<(), ModelError> {
        for (r, t) in ds.iter() {
            if r.index() >= self.0.len() {
                return Err(ModelError::ReplicaOutOfRange {
                    replica: r,
                    len: self.0.len(),
                });
            }
            self.raise(r, t);
        }
        Ok(())
    }

    /// True when every entry is `<=` the matching entry of `other`.
    pub fn dominated_by(&self, other: &StableVector) -> bool {
        self.0.len() == other.0.len() && self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    /// Smallest entry, used where a scalar watermark is needed.
    pub fn min_entry(&self) -> HlcTimestamp {
        self.0.iter().copied().min().unwrap_or_default()
    }

    fn check_len(&self, other: usize) -> Result<(), ModelError> {
        if self.0.len() != other {
            return Err(ModelError::LengthMismatch {
                left: self.0.len(),
                right: other,
            });
        }
        Ok(())
    }
}

pub fn sv_max(a: &StableVector, b: &StableVector) -> Result<StableVector, ModelError> {
    let mut out = a.clone();
    out.join(b)?;
    Ok(out)
}

pub fn sv_max_ds(a: &StableVector, ds: &DependencySet) -> Result<StableVector, ModelError> {
    let mut out = a.clone();
    out.join_ds(ds)?;
    Ok(out)
}

/// One stored item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Version {
    pub key: Key,
    pub value: Value,
    pub ut: HlcTimestamp,
    pub sr: ReplicaId,
    pub ds: DependencySet,
}

impl Version {
    pub fn stamp(&self) -> Stamp {
        Stamp {
            ut: self.ut,
            sr: self.sr,
        }
    }

    /// `ds` with the version's own `(sr, ut)` folded in; what readers
    /// inherit as dependencies.
    pub fn ds_with_self(&self) -> DependencySet {
        let mut ds = self.ds.clone();
        ds.include(self.sr, self.ut);
        ds
    }
}

/// Last-writer-wins: the version with the greater `(ut, sr)`.
pub fn lww_winner<'a>(a: &'a Version, b: &'a Version) -> Result<&'a Version, ModelError> {
    if a.key != b.key {
        return Err(ModelError::KeyMismatch {
            a: a.key.clone(),
            b: b.key.clone(),
        });
    }
    Ok(if a.stamp() >= b.stamp() { a } else { b })
}

/// GET visibility: local versions always, remote ones once every
/// dependency is covered by `dsv`.
pub fn visible_under(d: &Version, local: ReplicaId, dsv: &StableVector) -> bool {
    d.sr == local || d.ds.iter().all(|(i, h)| h <= dsv.get(i))
}

/// Snapshot membership: every dependency and the version itself are
/// covered by `sv`. Local versions get no exemption.
pub fn visible_in_snapshot(d: &Version, sv: &StableVector) -> bool {
    d.ut <= sv.get(d.sr) && d.ds.iter().all(|(i, h)| h <= sv.get(i))
}

/// Stable key placement: FNV-1a over the key bytes, modulo `N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub partitions: u16,
}

impl Placement {
    pub fn new(partitions: u16) -> Self {
        assert!(partitions >= 1, "at least one partition is required");
        Placement { partitions }
    }

    pub fn partition_of(&self, key: &[u8]) -> PartitionId {
        const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        let hash = key
            .iter()
            .fold(OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(PRIME));
        PartitionId((hash % u64::from(self.partitions)) as u16)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ts(l: u64, c: u64) -> HlcTimestamp {
        HlcTimestamp::new(l, c)
    }

    fn r(i: u16) -> ReplicaId {
        ReplicaId(i)
    }

    fn ds(pairs: &[(u16, u64, u64)]) -> DependencySet {
        pairs.iter().map(|&(i, l, c)| (r(i), ts(l, c))).collect()
    }

    fn sv(entries: &[(u64, u64)]) -> StableVector {
        StableVector::from_entries(entries.iter().map(|&(l, c)| ts(l, c)).collect())
    }

    fn version(ut: HlcTimestamp, sr: u16, deps: DependencySet) -> Version {
        Version {
            key: "k".into(),
            value: "v".into(),
            ut,
            sr: r(sr),
            ds: deps,
        }
    }

    #[test]
    fn max_ds_examples() {
        assert_eq!(max_ds(&ds(&[]), &ds(&[(1, 5, 0)])), ds(&[(1, 5, 0)]));
        assert_eq!(
            max_ds(&ds(&[(0, 3, 2)]), &ds(&[(0, 3, 1)])),
            ds(&[(0, 3, 2)])
        );
        assert_eq!(
            max_ds(&ds(&[(0, 3, 0)]), &ds(&[(1, 2, 0)])),
            ds(&[(0, 3, 0), (1, 2, 0)])
        );
    }

    #[test]
    fn sv_max_examples() {
        let a = sv(&[(1, 0), (2, 0)]);
        assert_eq!(sv_max(&a, &sv(&[(0, 0), (3, 0)])).unwrap(), sv(&[(1, 0), (3, 0)]));
        assert_eq!(sv_max_ds(&a, &ds(&[(0, 5, 0)])).unwrap(), sv(&[(5, 0), (2, 0)]));
        assert_eq!(sv_max(&a, &a).unwrap(), a);
    }

    #[test]
    fn sv_length_mismatch_is_an_error() {
        let err = sv_max(&sv(&[(1, 0)]), &sv(&[(1, 0), (2, 0)])).unwrap_err();
        assert_eq!(err, ModelError::LengthMismatch { left: 1, right: 2 });
        assert!(sv_max_ds(&sv(&[(1, 0)]), &ds(&[(3, 1, 0)])).is_err());
    }

    #[test]
    fn lww_examples() {
        let a = version(ts(5, 0), 2, ds(&[]));
        let b = version(ts(5, 0), 1, ds(&[]));
        assert_eq!(lww_winner(&a, &b).unwrap(), &a);
        let a = version(ts(4, 9), 2, ds(&[]));
        let b = version(ts(5, 0), 0, ds(&[]));
        assert_eq!(lww_winner(&a, &b).unwrap(), &b);
        assert_eq!(lww_winner(&a, &a).unwrap(), &a);
    }

    #[test]
    fn lww_rejects_different_keys() {
        let a = version(ts(1, 0), 0, ds(&[]));
        let mut b = a.clone();
        b.key = "other".into();
        assert!(matches!(lww_winner(&a, &b), Err(ModelError::KeyMismatch { .. })));
    }

    #[test]
    fn visible_under_examples() {
        let dsv = sv(&[(0, 0), (6, 0)]);
        let local = version(ts(9, 0), 0, ds(&[(1, 100, 0)]));
        assert!(visible_under(&local, r(0), &dsv));
        let blocked = version(ts(9, 0), 0, ds(&[(1, 7, 0)]));
        assert!(!visible_under(&blocked, r(1), &dsv));
        let free = version(ts(9, 0), 0, ds(&[]));
        assert!(visible_under(&free, r(1), &dsv));
    }

    #[test]
    fn visible_in_snapshot_examples() {
        let snap = sv(&[(5, 0), (0, 0)]);
        assert!(visible_in_snapshot(&version(ts(5, 0), 0, ds(&[])), &snap));
        assert!(!visible_in_snapshot(&version(ts(5, 1), 0, ds(&[])), &snap));
        let snap = sv(&[(9, 0), (9, 9)]);
        assert!(visible_in_snapshot(&version(ts(5, 0), 0, ds(&[(1, 2, 0)])), &snap));
    }

    #[test]
    fn dependency_set_json_is_sorted_pairs() {
        let d = ds(&[(2, 0, 1), (0, 1, 0)]);
        let json = serde_json::to_string(&d).unwrap();
        assert_eq!(json, "[[0,65536],[2,1]]");
        assert_eq!(serde_json::from_str::<DependencySet>(&json).unwrap(), d);
        assert!(serde_json::from_str::<DependencySet>("[[0,1],[0,2]]").is_err());
    }

    #[test]
    fn bytes_json_prefers_strings() {
        assert_eq!(serde_json::to_string(&Bytes::from("abc")).unwrap(), "\"abc\"");
        let raw = Bytes(vec![0xff, 0x00]);
        let json = serde_json::to_string(&raw).unwrap();
        assert_eq!(json, "[255,0]");
        assert_eq!(serde_json::from_str::<Bytes>(&json).unwrap(), raw);
    }

    #[test]
    fn placement_is_stable() {
        let p = Placement::new(4);
        for key in ["a", "b", "user:1", "photo"] {
            assert_eq!(p.partition_of(key.as_bytes()), p.partition_of(key.as_bytes()));
            assert!(p.partition_of(key.as_bytes()).0 < 4);
        }
        // Pinned values guard against accidental hash changes.
        assert_eq!(Placement::new(1000).partition_of(b"a").0, (0xaf63_dc4c_8601_ec8c_u64 % 1000) as u16);
    }

    fn any_ds() -> impl Strategy<Value = DependencySet> {
        proptest::collection::vec((0u16..4, 0u64..20, 0u64..4), 0..5)
            .prop_map(|v| v.into_iter().map(|(i, l, c)| (r(i), ts(l, c))).collect())
    }

    fn any_sv() -> impl Strategy<Value = StableVector> {
        proptest::collection::vec((0u64..20, 0u64..4), 4)
            .prop_map(|v| StableVector::from_entries(v.into_iter().map(|(l, c)| ts(l, c)).collect()))
    }

    fn any_version() -> impl Strategy<Value = Version> {
        (0u64..20, 0u64..3, 0u16..4, any_ds())
            .prop_map(|(l, c, sr, deps)| version(ts(l, c), sr, deps))
    }

    proptest! {
        #[test]
        fn max_ds_is_a_semilattice(a in any_ds(), b in any_ds(), c in any_ds()) {
            prop_assert_eq!(max_ds(&a, &b), max_ds(&b, &a));
            prop_assert_eq!(max_ds(&max_ds(&a, &b), &c), max_ds(&a, &max_ds(&b, &c)));
            prop_assert_eq!(max_ds(&a, &a), a);
        }

        #[test]
        fn sv_max_is_a_semilattice(a in any_sv(), b in any_sv(), c in any_sv()) {
            prop_assert_eq!(sv_max(&a, &b).unwrap(), sv_max(&b, &a).unwrap());
            prop_assert_eq!(
                sv_max(&sv_max(&a, &b).unwrap(), &c).unwrap(),
                sv_max(&a, &sv_max(&b, &c).unwrap()).unwrap()
            );
            prop_assert_eq!(sv_max(&a, &a).unwrap(), a);
        }

        #[test]
        fn lww_fold_is_order_independent(mut vs in proptest::collection::vec(any_version(), 1..8), seed in any::<u64>()) {
            let fold = |vs: &[Version]| {
                vs.iter().skip(1).fold(vs[0].clone(), |acc, v| lww_winner(&acc, v).unwrap().clone())
            };
            let forward = fold(&vs);
            // deterministic shuffle
            let n = vs.len();
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                vs.swap(i, (s >> 33) as usize % (i + 1));
            }
            prop_assert_eq!(fold(&vs).stamp(), forward.stamp());
        }

        #[test]
        fn snapshot_visibility_is_monotone(d in any_version(), a in any_sv(), b in any_sv()) {
            let hi = sv_max(&a, &b).unwrap();
            if visible_in_snapshot(&d, &a) {
                prop_assert!(visible_in_snapshot(&d, &hi));
            }
        }
    }
}
