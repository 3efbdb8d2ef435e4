//! Per-partition multi-version store.
//!
//! Each key owns a version chain ordered by `(ut, sr)`. Nothing is ever
//! garbage collected; the checker and convergence audit need full history.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{visible_in_snapshot, visible_under, Key, ReplicaId, StableVector, Stamp, Version};

/// All versions of one key, unique per `(ut, sr)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VersionChain {
    versions: BTreeMap<Stamp, Version>,
}

impl VersionChain {
    /// Inserts `d`, replacing any version with the same stamp.
    pub fn insert(&mut self, d: Version) {
        self.versions.insert(d.stamp(), d);
    }

    pub fn len(&self) -> usize {
        self.versions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.versions.is_empty()
    }

    /// Versions in descending `(ut, sr)` order.
    pub fn iter(&self) -> impl Iterator<Item = &Version> {
        self.versions.values().rev()
    }

    pub fn head(&self) -> Option<&Version> {
        self.iter().next()
    }

    /// The lww-greatest version satisfying `pred`.
    pub fn latest_where(&self, pred: impl Fn(&Version) -> bool) -> Option<&Version> {
        self.iter().find(|d| pred(d))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Store {
    chains: BTreeMap<Key, VersionChain>,
}

impl Store {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, d: Version) {
        self.chains.entry(d.key.clone()).or_default().insert(d);
    }

    pub fn chain(&self, key: &Key) -> Option<&VersionChain> {
        self.chains.get(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &Key> {
        self.chains.keys()
    }

    pub fn version_count(&self) -> usize {
        self.chains.values().map(VersionChain::len).sum()
    }

    pub fn latest_where(&self, key: &Key, pred: impl Fn(&Version) -> bool) -> Option<&Version> {
        self.chains.get(key)?.latest_where(pred)
    }

    /// GET read path: newest version that is local or whose dependencies are
    /// covered by `dsv`.
    pub fn read_visible(&self, key: &Key, local: ReplicaId, dsv: &StableVector) -> Option<&Version> {
        self.latest_where(key, |d| visible_under(d, local, dsv))
    }

    /// Snapshot read path: newest version entirely inside `sv`.
    pub fn read_snapshot(&self, key: &Key, sv: &StableVector) -> Option<&Version> {
        self.latest_where(key, |d| visible_in_snapshot(d, sv))
    }

    pub fn dump(&self) -> StoreDump {
        StoreDump {
            keys: self
                .chains
                .iter()
                .map(|(k, chain)| KeyDump {
                    key: k.clone(),
                    versions: chain.iter().cloned().collect(),
                })
                .collect(),
        }
    }
}

/// Canonical JSON form of a store: keys ascending, versions newest first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreDump {
    pub keys: Vec<KeyDump>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyDump {
    pub key: Key,
    pub versions: Vec<Version>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hlc::HlcTimestamp;
    use crate::model::DependencySet;
    use proptest::prelude::*;

    fn ts(l: u64, c: u64) -> HlcTimestamp {
        HlcTimestamp::new(l, c)
    }

    fn v(key: &str, ut: HlcTimestamp, sr: u16, ds: &[(u16, HlcTimestamp)]) -> Version {
        Version {
            key: key.into(),
            value: format!("{key}@{ut}").into(),
            ut,
            sr: ReplicaId(sr),
            ds: ds.iter().map(|(i, h)| (ReplicaId(*i), *h)).collect(),
        }
    }

    fn svec(e: &[HlcTimestamp]) -> StableVector {
        StableVector::from_entries(e.to_vec())
    }

    #[test]
    fn insert_examples() {
        let mut chain = VersionChain::default();
        chain.insert(v("k", ts(5, 0), 1, &[]));
        assert_eq!(chain.len(), 1);
        chain.insert(v("k", ts(5, 0), 0, &[]));
        assert_eq!(chain.head().unwrap().sr, ReplicaId(1));
        chain.insert(v("k", ts(5, 0), 0, &[]));
        assert_eq!(chain.len(), 2);
    }

    #[test]
    fn chain_iterates_descending() {
        let mut chain = VersionChain::default();
        for (l, sr) in [(3, 0), (9, 1), (1, 2), (9, 0)] {
            chain.insert(v("k", ts(l, 0), sr, &[]));
        }
        let stamps: Vec<Stamp> = chain.iter().map(Version::stamp).collect();
        let mut sorted = stamps.clone();
        sorted.sort_by(|a, b| b.cmp(a));
        assert_eq!(stamps, sorted);
    }

    #[test]
    fn read_visible_examples() {
        let key: Key = "k".into();
        let mut store = Store::new();
        store.insert(v("k", ts(9, 0), 0, &[]));
        store.insert(v("k", ts(10, 0), 1, &[(2, ts(8, 0))]));
        let dsv = svec(&[ts(0, 0), ts(0, 0), ts(7, 0)]);
        assert_eq!(store.read_visible(&key, ReplicaId(0), &dsv).unwrap().ut, ts(9, 0));

        assert!(Store::new().read_visible(&key, ReplicaId(0), &dsv).is_none());

        let mut single = Store::new();
        single.insert(v("k", ts(4, 0), 1, &[]));
        assert_eq!(single.read_visible(&key, ReplicaId(0), &dsv).unwrap().ut, ts(4, 0));
    }

    #[test]
    fn read_snapshot_examples() {
        let key: Key = "k".into();
        let mut store = Store::new();
        store.insert(v("k", ts(6, 0), 0, &[]));
        let sv = svec(&[ts(5, 0), ts(0, 0)]);
        assert!(store.read_snapshot(&key, &sv).is_none());

        let mut store = Store::new();
        store.insert(v("k", ts(5, 0), 0, &[(1, ts(3, 2))]));
        let sv = svec(&[ts(5, 0), ts(3, 2)]);
        assert_eq!(store.read_snapshot(&key, &sv).unwrap().ut, ts(5, 0));

        assert!(Store::new().read_snapshot(&key, &sv).is_none());
    }

    #[test]
    fn dump_is_canonical_json() {
        let mut store = Store::new();
        store.insert(v("b", ts(1, 0), 0, &[]));
        store.insert(v("a", ts(2, 0), 1, &[(0, ts(1, 0))]));
        let json = serde_json::to_string(&store.dump()).unwrap();
        assert!(json.starts_with("{\"keys\":[{\"key\":\"a\""));
        let back: StoreDump = serde_json::from_str(&json).unwrap();
        assert_eq!(back, store.dump());
    }

    // Brute-force reference: scan every version, apply the predicate, take
    // the lww maximum. Independent of the chain ordering.
    fn brute_force(vs: &[Version], pred: impl Fn(&Version) -> bool) -> Option<Stamp> {
        vs.iter().filter(|d| pred(d)).map(Version::stamp).max()
    }

    fn arb_chain() -> impl Strategy<Value = Vec<Version>> {
        proptest::collection::vec(
            (0u64..12, 0u64..3, 0u16..3, proptest::collection::vec((0u16..3, 0u64..12, 0u64..3), 0..3)),
            0..=8,
        )
        .prop_map(|raw| {
            raw.into_iter()
                .map(|(l, c, sr, deps)| {
                    let ds: DependencySet =
                        deps.into_iter().map(|(i, l, c)| (ReplicaId(i), ts(l, c))).collect();
                    let pairs: Vec<(u16, HlcTimestamp)> = ds.iter().map(|(i, h)| (i.0, h)).collect();
                    v("k", ts(l, c), sr, &pairs)
                })
                .collect()
        })
    }

    fn arb_vec() -> impl Strategy<Value = StableVector> {
        proptest::collection::vec((0u64..12, 0u64..3), 3)
            .prop_map(|e| svec(&e.into_iter().map(|(l, c)| ts(l, c)).collect::<Vec<_>>()))
    }

    proptest! {
        #[test]
        fn read_paths_match_brute_force(vs in arb_chain(), dsv in arb_vec(), local in 0u16..3) {
            let mut store = Store::new();
            // Keep the last write for duplicate stamps, like the chain does.
            let mut dedup: BTreeMap<Stamp, Version> = BTreeMap::new();
            for d in &vs {
                store.insert(d.clone());
                dedup.insert(d.stamp(), d.clone());
            }
            let all: Vec<Version> = dedup.into_values().collect();
            let key: Key = "k".into();
            let local = ReplicaId(local);
            let expected = brute_force(&all, |d| {
                d.sr == local || d.ds.iter().all(|(i, h)| h <= dsv.entries()[i.index()])
            });
            prop_assert_eq!(store.read_visible(&key, local, &dsv).map(Version::stamp), expected);
            let expected = brute_force(&all, |d| {
                d.ut <= dsv.entries()[d.sr.index()] && d.ds.iter().all(|(i, h)| h <= dsv.entries()[i.index()])
            });
            prop_assert_eq!(store.read_snapshot(&key, &dsv).map(Version::stamp), expected);
        }

        #[test]
        fn read_visible_is_monotone_in_dsv(vs in arb_chain(), a in arb_vec(), b in arb_vec(), local in 0u16..3) {
            let mut store = Store::new();
            for d in vs { store.insert(d); }
            let key: Key = "k".into();
            let hi = crate::model::sv_max(&a, &b).unwrap();
            let low = store.read_visible(&key, ReplicaId(local), &a).map(Version::stamp);
            let high = store.read_visible(&key, ReplicaId(local), &hi).map(Version::stamp);
            prop_assert!(high >= low);
        }
    }
}
