//! Happens-before over client operations and the induced dependency
//! relation between versions.
//!
//! Operation `a` happens before `b` if they belong to the same client and
//! `a` came first, if `b` read a version `a` wrote, or transitively. A
//! version `v1` depends on `v2` when the write of `v2` happens before the
//! write of `v1`.

use std::collections::{BTreeSet, VecDeque};

use fixedbitset::FixedBitSet;

use crate::checker::history::{History, WriteId};
use crate::checker::CheckError;

#[derive(Debug, Clone)]
pub struct DependencyGraph {
    /// Strict ancestors of each operation.
    ancestors: Vec<FixedBitSet>,
}

/// Direct edges: consecutive operations of a session, and writer to reader.
fn edges(h: &History) -> Result<Vec<(usize, usize)>, CheckError> {
    let mut out = Vec::new();
    let mut last_of_client = std::collections::BTreeMap::new();
    for (i, o) in h.ops.iter().enumerate() {
        if let Some(prev) = last_of_client.insert(o.client, i) {
            out.push((prev, i));
        }
        for (key, item) in o.reads() {
            let Some(stamp) = item else { continue };
            let w = WriteId { key, stamp };
            let writer = *h
                .writers
                .get(&w)
                .ok_or_else(|| CheckError::UnknownVersion(w.clone()))?;
            out.push((writer, i));
        }
    }
    Ok(out)
}

impl DependencyGraph {
    pub fn build(h: &History) -> Result<Self, CheckError> {
        let n = h.ops.len();
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut succs: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (a, b) in edges(h)? {
            preds[b].push(a);
            succs[a].push(b);
        }
        let mut indegree: Vec<usize> = preds.iter().map(Vec::len).collect();
        let mut ready: VecDeque<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut ancestors = vec![FixedBitSet::with_capacity(n); n];
        let mut visited = 0;
        while let Some(v) = ready.pop_front() {
            visited += 1;
            let mut acc = FixedBitSet::with_capacity(n);
            for &p in &preds[v] {
                acc.union_with(&ancestors[p]);
                acc.insert(p);
            }
            ancestors[v] = acc;
            for &s in &succs[v] {
                indegree[s] -= 1;
                if indegree[s] == 0 {
                    ready.push_back(s);
                }
            }
        }
        if visited != n {
            return Err(CheckError::Cycle);
        }
        Ok(DependencyGraph { ancestors })
    }

    /// Whether operation `a` happens before operation `b`.
    pub fn happens_before(&self, a: usize, b: usize) -> bool {
        self.ancestors[b].contains(a)
    }

    pub fn ancestors(&self, op: usize) -> impl Iterator<Item = usize> + '_ {
        self.ancestors[op].ones()
    }

    /// `v1 dep v2`.
    pub fn dep(&self, h: &History, v1: &WriteId, v2: &WriteId) -> bool {
        match (h.writers.get(v1), h.writers.get(v2)) {
            (Some(&a), Some(&b)) => self.happens_before(b, a),
            _ => false,
        }
    }

    pub fn dep_pairs(&self, h: &History) -> BTreeSet<(WriteId, WriteId)> {
        let mut out = BTreeSet::new();
        for (v1, &a) in &h.writers {
            for b in self.ancestors(a) {
                if let Some(v2) = h.ops[b].write() {
                    out.insert((v1.clone(), v2));
                }
            }
        }
        out
    }
}

/// Reference implementation: expand the three clauses of the definition
/// over every pair of operations and close transitively by fixpoint
/// iteration. Quadratic memory and cubic time; meant for small histories.
#[allow(clippy::needless_range_loop)]
pub fn brute_force_dep_pairs(h: &History) -> Result<BTreeSet<(WriteId, WriteId)>, CheckError> {
    let n = h.ops.len();
    let mut hb = vec![vec![false; n]; n];
    for a in 0..n {
        for b in 0..n {
            let (x, y) = (&h.ops[a], &h.ops[b]);
            if x.client == y.client && x.start_seq < y.start_seq {
                hb[a][b] = true;
            }
            if let Some(w) = x.write() {
                if y.reads()
                    .iter()
                    .any(|(k, s)| *k == w.key && *s == Some(w.stamp))
                {
                    hb[a][b] = true;
                }
            }
        }
    }
    for o in &h.ops {
        for (key, item) in o.reads() {
            if let Some(stamp) = item {
                let w = WriteId { key, stamp };
                if !h.writers.contains_key(&w) {
                    return Err(CheckError::UnknownVersion(w));
                }
            }
        }
    }
    loop {
        let mut changed = false;
        for a in 0..n {
            for b in 0..n {
                if !hb[a][b] {
                    continue;
                }
                for c in 0..n {
                    if hb[b][c] && !hb[a][c] {
                        hb[a][c] = true;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    if (0..n).any(|a| hb[a][a]) {
        return Err(CheckError::Cycle);
    }
    let mut out = BTreeSet::new();
    for (v1, &a) in &h.writers {
        for (v2, &b) in &h.writers {
            if hb[b][a] {
                out.insert((v1.clone(), v2.clone()));
            }
        }
    }
    Ok(out)
}
