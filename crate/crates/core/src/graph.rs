//! Weighted undirected graphs and the Steiner-tree algebra built on them.
//!
//! Weights are exact scaled integers: rational inputs are brought to a common
//! denominator at parse time, so every comparison downstream is exact.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};

/// Dense vertex index, `0..n` after loading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VertexId(pub u32);

impl VertexId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Exact non-negative weight (scaled integer). Addition is checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Weight(pub u64);

impl Weight {
    pub const ZERO: Weight = Weight(0);

    #[inline]
    pub fn checked_add(self, other: Weight) -> Result<Weight> {
        self.0
            .checked_add(other.0)
            .map(Weight)
            .ok_or(Error::Overflow)
    }
}

impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Canonical undirected edge: `u < v`.
pub type EdgeKey = (VertexId, VertexId);

#[inline]
pub fn edge_key(a: VertexId, b: VertexId) -> EdgeKey {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub u: VertexId,
    pub v: VertexId,
    pub w: Weight,
}

/// Immutable undirected weighted graph.
///
/// No self-loops, no parallel edges (the minimum weight is kept when input
/// repeats an edge). `labels` maps dense ids back to the labels used in the
/// input file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    scale: u64,
    labels: Vec<u32>,
    edges: Vec<Edge>,
    weight_of: BTreeMap<EdgeKey, Weight>,
    adj: Vec<Vec<(VertexId, Weight)>>,
}

impl Graph {
    /// Build a graph from raw edges. Duplicate edges keep the minimum weight,
    /// self-loops are rejected.
    pub fn new(n: usize, raw_edges: Vec<(u32, u32, u64)>, scale: u64, labels: Vec<u32>) -> Result<Self> {
        assert_eq!(labels.len(), n);
        let mut weight_of: BTreeMap<EdgeKey, Weight> = BTreeMap::new();
        for (a, b, w) in raw_edges {
            if a as usize >= n {
                return Err(Error::UnknownVertex(a));
            }
            if b as usize >= n {
                return Err(Error::UnknownVertex(b));
            }
            if a == b {
                return Err(Error::Parse {
                    line: 0,
                    msg: format!("self-loop on vertex {a}"),
                });
            }
            let key = edge_key(VertexId(a), VertexId(b));
            let w = Weight(w);
            weight_of
                .entry(key)
                .and_modify(|cur| {
                    if w < *cur {
                        *cur = w;
                    }
                })
                .or_insert(w);
        }
        let edges: Vec<Edge> = weight_of
            .iter()
            .map(|(&(u, v), &w)| Edge { u, v, w })
            .collect();
        let mut adj = vec![Vec::new(); n];
        for e in &edges {
            adj[e.u.index()].push((e.v, e.w));
            adj[e.v.index()].push((e.u, e.w));
        }
        for list in &mut adj {
            list.sort();
        }
        Ok(Graph {
            n,
            scale,
            labels,
            edges,
            weight_of,
            adj,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn scale(&self) -> u64 {
        self.scale
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self, v: VertexId) -> &[(VertexId, Weight)] {
        &self.adj[v.index()]
    }

    pub fn edge_weight(&self, a: VertexId, b: VertexId) -> Option<Weight> {
        self.weight_of.get(&edge_key(a, b)).copied()
    }

    pub fn label(&self, v: VertexId) -> u32 {
        self.labels[v.index()]
    }

    /// Dense id for an input-file label.
    pub fn vertex_by_label(&self, label: u32) -> Option<VertexId> {
        self.labels
            .iter()
            .position(|&l| l == label)
            .map(|i| VertexId(i as u32))
    }

    pub fn vertices(&self) -> impl Iterator<Item = VertexId> {
        (0..self.n as u32).map(VertexId)
    }

    /// Same structure with every weight multiplied by `c`.
    pub fn scaled_weights(&self, c: u64) -> Result<Graph> {
        let mut raw = Vec::with_capacity(self.edges.len());
        for e in &self.edges {
            let w = e.w.0.checked_mul(c).ok_or(Error::Overflow)?;
            raw.push((e.u.0, e.v.0, w));
        }
        Graph::new(self.n, raw, self.scale, self.labels.clone())
    }

    /// Stable content hash over vertex count, scale and the canonical edge list.
    pub fn content_hash(&self) -> [u8; 32] {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update((self.n as u64).to_le_bytes());
        h.update(self.scale.to_le_bytes());
        for e in &self.edges {
            h.update(e.u.0.to_le_bytes());
            h.update(e.v.0.to_le_bytes());
            h.update(e.w.0.to_le_bytes());
        }
        h.finalize().into()
    }
}

/// Minimal union-find used for connectivity and cycle checks.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    pub fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            self.parent[x] = self.find(self.parent[x]);
        }
        self.parent[x]
    }

    /// Returns false if `a` and `b` were already in the same set.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }

    pub fn same(&mut self, a: usize, b: usize) -> bool {
        self.find(a) == self.find(b)
    }
}

/// A tree spanning its terminal set. Empty when there are fewer than two
/// terminals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SteinerTree {
    terminals: BTreeSet<VertexId>,
    edges: BTreeSet<EdgeKey>,
    weight: Weight,
}

impl SteinerTree {
    pub fn empty(terminals: BTreeSet<VertexId>) -> Self {
        SteinerTree {
            terminals,
            edges: BTreeSet::new(),
            weight: Weight::ZERO,
        }
    }

    pub fn from_edges(
        g: &Graph,
        terminals: BTreeSet<VertexId>,
        edges: BTreeSet<EdgeKey>,
    ) -> Result<Self> {
        let mut weight = Weight::ZERO;
        for &(u, v) in &edges {
            let w = g
                .edge_weight(u, v)
                .ok_or_else(|| Error::Internal(format!("edge ({u},{v}) not in graph")))?;
            weight = weight.checked_add(w)?;
        }
        Ok(SteinerTree {
            terminals,
            edges,
            weight,
        })
    }

    pub fn terminals(&self) -> &BTreeSet<VertexId> {
        &self.terminals
    }

    pub fn edges(&self) -> &BTreeSet<EdgeKey> {
        &self.edges
    }

    pub fn weight(&self) -> Weight {
        self.weight
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// All vertices touched by the edge set, plus the terminals.
    pub fn vertices(&self) -> BTreeSet<VertexId> {
        let mut vs: BTreeSet<VertexId> = self.terminals.clone();
        for &(u, v) in &self.edges {
            vs.insert(u);
            vs.insert(v);
        }
        vs
    }

    /// Total order used for deterministic tie-breaks: weight first, then the
    /// sorted edge list.
    pub fn tie_break_cmp(&self, other: &SteinerTree) -> std::cmp::Ordering {
        self.weight
            .cmp(&other.weight)
            .then_with(|| self.edges.cmp(&other.edges))
    }

    /// Checks the structural invariants: acyclic, connected, every terminal
    /// incident to the edge set, weight equal to the recomputed edge sum.
    pub fn validate(&self, g: &Graph) -> Result<()> {
        if self.edges.is_empty() {
            if self.terminals.len() > 1 {
                return Err(Error::Internal(
                    "empty tree with more than one terminal".into(),
                ));
            }
            if self.weight != Weight::ZERO {
                return Err(Error::Internal("empty tree with nonzero weight".into()));
            }
            return Ok(());
        }
        let vs = self.vertices();
        let idx: BTreeMap<VertexId, usize> = vs.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut uf = UnionFind::new(vs.len());
        let mut sum = Weight::ZERO;
        for &(u, v) in &self.edges {
            let w = g
                .edge_weight(u, v)
                .ok_or_else(|| Error::Internal(format!("edge ({u},{v}) not in graph")))?;
            sum = sum.checked_add(w)?;
            if !uf.union(idx[&u], idx[&v]) {
                return Err(Error::Internal("tree contains a cycle".into()));
            }
        }
        if sum != self.weight {
            return Err(Error::Internal(format!(
                "stored weight {} != recomputed {}",
                self.weight, sum
            )));
        }
        // acyclic + |edges| = |vertices| - 1 implies connected over `vs`,
        // but check explicitly to catch isolated terminals
        let root = uf.find(0);
        for i in 1..vs.len() {
            if uf.find(i) != root {
                return Err(Error::Internal("tree is disconnected".into()));
            }
        }
        if self.edges.len() != vs.len() - 1 {
            return Err(Error::Internal("edge count != vertex count - 1".into()));
        }
        Ok(())
    }
}

/// Union of tree edge sets: connected only if the inputs share a vertex.
/// May contain cycles; callers run [`prune_to_tree`] before comparing weights.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub terminals: BTreeSet<VertexId>,
    pub edges: BTreeSet<EdgeKey>,
    pub disconnected: bool,
}

/// Union of two trees. Shared edges are counted once. The `disconnected` flag
/// is set when the parts touch no common vertex (infeasible candidate).
pub fn graph_union(t1: &SteinerTree, t2: &SteinerTree) -> Candidate {
    let terminals: BTreeSet<VertexId> = t1.terminals.union(&t2.terminals).copied().collect();
    let edges: BTreeSet<EdgeKey> = t1.edges.union(&t2.edges).copied().collect();
    let disconnected = if t1.is_empty() || t2.is_empty() {
        false
    } else {
        t1.vertices().intersection(&t2.vertices()).next().is_none()
    };
    Candidate {
        terminals,
        edges,
        disconnected,
    }
}

pub fn candidate_weight(g: &Graph, c: &Candidate) -> Result<Weight> {
    let mut w = Weight::ZERO;
    for &(u, v) in &c.edges {
        w = w.checked_add(
            g.edge_weight(u, v)
                .ok_or_else(|| Error::Internal(format!("edge ({u},{v}) not in graph")))?,
        )?;
    }
    Ok(w)
}

/// Reduce a connected candidate subgraph to a tree spanning its terminals:
/// minimum spanning tree of the candidate's edges, then repeated stripping of
/// non-terminal leaves. Never increases weight.
pub fn prune_to_tree(g: &Graph, cand: &Candidate) -> Result<SteinerTree> {
    if cand.terminals.len() <= 1 {
        return Ok(SteinerTree::empty(cand.terminals.clone()));
    }
    if cand.disconnected {
        return Err(Error::Infeasible);
    }
    let vs: Vec<VertexId> = {
        let mut s: BTreeSet<VertexId> = cand.terminals.clone();
        for &(u, v) in &cand.edges {
            s.insert(u);
            s.insert(v);
        }
        s.into_iter().collect()
    };
    let idx: BTreeMap<VertexId, usize> = vs.iter().enumerate().map(|(i, &v)| (v, i)).collect();

    // Kruskal over the candidate edges, ordered by (weight, edge) for
    // deterministic output.
    let mut sorted: Vec<(Weight, EdgeKey)> = Vec::with_capacity(cand.edges.len());
    for &(u, v) in &cand.edges {
        let w = g
            .edge_weight(u, v)
            .ok_or_else(|| Error::Internal(format!("edge ({u},{v}) not in graph")))?;
        sorted.push((w, (u, v)));
    }
    sorted.sort();
    let mut uf = UnionFind::new(vs.len());
    let mut chosen: BTreeSet<EdgeKey> = BTreeSet::new();
    for (_, (u, v)) in sorted {
        if uf.union(idx[&u], idx[&v]) {
            chosen.insert((u, v));
        }
    }
    // all terminals must land in one component
    let mut terms = cand.terminals.iter();
    let first = idx
        .get(terms.next().unwrap())
        .copied()
        .ok_or(Error::Infeasible)?;
    let root = uf.find(first);
    for t in terms {
        let i = idx.get(t).copied().ok_or(Error::Infeasible)?;
        if uf.find(i) != root {
            return Err(Error::Infeasible);
        }
    }

    // strip non-terminal leaves until fixpoint
    let mut degree: BTreeMap<VertexId, usize> = BTreeMap::new();
    let mut incident: BTreeMap<VertexId, Vec<EdgeKey>> = BTreeMap::new();
    for &(u, v) in &chosen {
        *degree.entry(u).or_insert(0) += 1;
        *degree.entry(v).or_insert(0) += 1;
        incident.entry(u).or_default().push((u, v));
        incident.entry(v).or_default().push((u, v));
    }
    let mut removed: BTreeSet<EdgeKey> = BTreeSet::new();
    let mut queue: Vec<VertexId> = degree
        .iter()
        .filter(|(v, &d)| d == 1 && !cand.terminals.contains(v))
        .map(|(&v, _)| v)
        .collect();
    while let Some(leaf) = queue.pop() {
        if degree.get(&leaf).copied().unwrap_or(0) != 1 || cand.terminals.contains(&leaf) {
            continue;
        }
        let e = incident[&leaf]
            .iter()
            .copied()
            .find(|e| !removed.contains(e))
            .expect("degree-1 vertex has a live edge");
        removed.insert(e);
        let (u, v) = e;
        let other = if u == leaf { v } else { u };
        *degree.get_mut(&leaf).unwrap() = 0;
        let d = degree.get_mut(&other).unwrap();
        *d -= 1;
        if *d == 1 && !cand.terminals.contains(&other) {
            queue.push(other);
        }
    }
    let final_edges: BTreeSet<EdgeKey> = chosen.difference(&removed).copied().collect();
    // components not containing terminals vanish entirely with the stripping;
    // edges left must form one tree over terminals
    SteinerTree::from_edges(g, cand.terminals.clone(), final_edges)
}

/// Minimum-weight path between two distinct vertices, as a two-terminal
/// Steiner tree. Ties are broken toward the lexicographically smallest
/// predecessor so output is deterministic.
pub fn shortest_path(g: &Graph, u: VertexId, v: VertexId) -> Result<SteinerTree> {
    assert_ne!(u, v, "shortest_path endpoints must differ");
    let (dist, pred) = dijkstra(g, u);
    if dist[v.index()] == u64::MAX {
        return Err(Error::Infeasible);
    }
    let mut edges = BTreeSet::new();
    let mut cur = v;
    while cur != u {
        let p = pred[cur.index()].expect("reachable vertex has a predecessor");
        edges.insert(edge_key(p, cur));
        cur = p;
    }
    let terminals: BTreeSet<VertexId> = [u, v].into_iter().collect();
    SteinerTree::from_edges(g, terminals, edges)
}

/// Single-source Dijkstra returning (distances, predecessors). On equal
/// distance the smaller predecessor id wins.
pub fn dijkstra(g: &Graph, src: VertexId) -> (Vec<u64>, Vec<Option<VertexId>>) {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;
    let n = g.vertex_count();
    let mut dist = vec![u64::MAX; n];
    let mut pred: Vec<Option<VertexId>> = vec![None; n];
    let mut heap = BinaryHeap::new();
    dist[src.index()] = 0;
    heap.push(Reverse((0u64, src)));
    let mut done = vec![false; n];
    while let Some(Reverse((d, x))) = heap.pop() {
        if done[x.index()] {
            continue;
        }
        done[x.index()] = true;
        for &(y, w) in g.neighbors(x) {
            let nd = d.saturating_add(w.0);
            match nd.cmp(&dist[y.index()]) {
                std::cmp::Ordering::Less => {
                    dist[y.index()] = nd;
                    pred[y.index()] = Some(x);
                    heap.push(Reverse((nd, y)));
                }
                std::cmp::Ordering::Equal => {
                    if pred[y.index()].map_or(true, |p| x < p) && !done[y.index()] {
                        pred[y.index()] = Some(x);
                    }
                }
                std::cmp::Ordering::Greater => {}
            }
        }
    }
    (dist, pred)
}
