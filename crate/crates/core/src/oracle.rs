//! Independent exact Steiner-tree solvers.
//!
//! `dreyfus_wagner` is the classical two-phase subset dynamic program
//! (subset merge + shortest-path growth) with backtrack records, so the
//! optimum tree for *every* subset of the terminal list can be read back
//! from one run. `brute_force_steiner` enumerates vertex supersets and is
//! the ground truth the rest of the system is tested against.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::graph::{
    dijkstra, edge_key, prune_to_tree, Candidate, EdgeKey, Graph, SteinerTree, UnionFind, VertexId,
    Weight,
};

/// Hard cap on Dreyfus-Wagner terminal count.
pub const DW_TERMINAL_CAP: usize = 16;
/// Hard cap on brute-force vertex count.
pub const BRUTE_FORCE_VERTEX_CAP: usize = 16;

const INF: u64 = u64::MAX;

fn add(a: u64, b: u64) -> u64 {
    if a == INF || b == INF {
        INF
    } else {
        a + b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Back {
    /// Singleton subset: shortest path from the terminal to the vertex.
    Single,
    /// Two complementary sub-solutions meeting at the vertex.
    Merge(u32),
    /// Solution at a neighbor plus the connecting edge.
    Attach(VertexId),
    None,
}

/// Full Dreyfus-Wagner table over a fixed terminal list. Entry
/// `(mask, v)` is the minimum weight of a tree spanning the masked
/// terminals plus `v`.
#[derive(Debug, Clone)]
pub struct DwTable {
    terminals: Vec<VertexId>,
    n: usize,
    dp: Vec<Vec<u64>>,
    back: Vec<Vec<Back>>,
    dist: Vec<Vec<u64>>,
    pred: Vec<Vec<Option<VertexId>>>,
}

impl DwTable {
    /// Build the table. Disconnected subsets simply stay at infinity; the
    /// caller decides whether that is an error.
    pub fn build(g: &Graph, terminals: &[VertexId]) -> Result<DwTable> {
        let k = terminals.len();
        if k > DW_TERMINAL_CAP {
            return Err(Error::CapExceeded(format!(
                "{k} terminals exceed the Dreyfus-Wagner cap of {DW_TERMINAL_CAP}"
            )));
        }
        let n = g.vertex_count();
        let mut dist = Vec::with_capacity(n);
        let mut pred = Vec::with_capacity(n);
        for v in g.vertices() {
            let (d, p) = dijkstra(g, v);
            dist.push(d);
            pred.push(p);
        }
        let full = 1usize << k;
        let mut dp = vec![vec![INF; n]; full];
        let mut back = vec![vec![Back::None; n]; full];
        for (ti, t) in terminals.iter().enumerate() {
            let mask = 1 << ti;
            for v in 0..n {
                dp[mask][v] = dist[t.index()][v];
                back[mask][v] = Back::Single;
            }
        }
        for mask in 1..full {
            if mask.count_ones() < 2 {
                continue;
            }
            // merge phase: split off the submasks containing the lowest bit
            let low = mask & mask.wrapping_neg();
            let rest = mask ^ low;
            let mut sub = rest;
            loop {
                let s1 = sub | low;
                let s2 = mask ^ s1;
                if s2 != 0 {
                    for v in 0..n {
                        let cand = add(dp[s1][v], dp[s2][v]);
                        if cand < dp[mask][v] {
                            dp[mask][v] = cand;
                            back[mask][v] = Back::Merge(s1 as u32);
                        }
                    }
                }
                if sub == 0 {
                    break;
                }
                sub = (sub - 1) & rest;
            }
            // growth phase: propagate along shortest paths (edge relaxation
            // with a heap is Dijkstra over the current layer)
            use std::cmp::Reverse;
            use std::collections::BinaryHeap;
            let mut heap: BinaryHeap<Reverse<(u64, VertexId)>> = (0..n)
                .filter(|&v| dp[mask][v] != INF)
                .map(|v| Reverse((dp[mask][v], VertexId(v as u32))))
                .collect();
            let mut done = vec![false; n];
            while let Some(Reverse((d, x))) = heap.pop() {
                if done[x.index()] || d > dp[mask][x.index()] {
                    continue;
                }
                done[x.index()] = true;
                for &(y, w) in g.neighbors(x) {
                    let nd = add(d, w.0);
                    if nd < dp[mask][y.index()] {
                        dp[mask][y.index()] = nd;
                        back[mask][y.index()] = Back::Attach(x);
                        heap.push(Reverse((nd, y)));
                    }
                }
            }
        }
        Ok(DwTable {
            terminals: terminals.to_vec(),
            n,
            dp,
            back,
            dist,
            pred,
        })
    }

    pub fn terminals(&self) -> &[VertexId] {
        &self.terminals
    }

    /// Bitmask for a terminal subset, by positions in the fixed list.
    pub fn mask_of(&self, subset: &BTreeSet<VertexId>) -> Option<usize> {
        let mut mask = 0usize;
        for t in subset {
            let pos = self.terminals.iter().position(|x| x == t)?;
            mask |= 1 << pos;
        }
        Some(mask)
    }

    fn subset_of(&self, mask: usize) -> BTreeSet<VertexId> {
        self.terminals
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .map(|(_, &t)| t)
            .collect()
    }

    /// Minimum weight spanning the masked terminals, or None if no tree
    /// exists (terminals in different components).
    pub fn weight_for(&self, mask: usize) -> Option<Weight> {
        if mask == 0 || mask.count_ones() == 1 {
            return Some(Weight::ZERO);
        }
        let best = (0..self.n).map(|v| self.dp[mask][v]).min().unwrap();
        if best == INF {
            None
        } else {
            Some(Weight(best))
        }
    }

    /// Shortest-path distance from the `ti`-th terminal to `v` (the
    /// singleton row of the table).
    pub fn singleton_distance(&self, ti: usize, v: VertexId) -> u64 {
        self.dp[1 << ti][v.index()]
    }

    fn path_edges(&self, from: VertexId, to: VertexId, out: &mut BTreeSet<EdgeKey>) {
        let mut cur = to;
        while cur != from {
            let p = self.pred[from.index()][cur.index()].expect("path exists");
            out.insert(edge_key(p, cur));
            cur = p;
        }
    }

    fn collect_edges(&self, mask: usize, v: VertexId, out: &mut BTreeSet<EdgeKey>) {
        match self.back[mask][v.index()] {
            Back::Single => {
                let ti = mask.trailing_zeros() as usize;
                let t = self.terminals[ti];
                if self.dist[t.index()][v.index()] > 0 {
                    self.path_edges(t, v, out);
                }
            }
            Back::Merge(s1) => {
                let s1 = s1 as usize;
                self.collect_edges(s1, v, out);
                self.collect_edges(mask ^ s1, v, out);
            }
            Back::Attach(u) => {
                out.insert(edge_key(u, v));
                self.collect_edges(mask, u, out);
            }
            Back::None => panic!("no backtrack record for reachable state"),
        }
    }

    /// Exact minimum Steiner tree for the masked subset, or None if
    /// infeasible. Deterministic: candidate attachment vertices are scanned
    /// in id order and candidate trees compared by (weight, edge list).
    pub fn tree_for(&self, g: &Graph, mask: usize) -> Result<Option<SteinerTree>> {
        let subset = self.subset_of(mask);
        if subset.len() <= 1 {
            return Ok(Some(SteinerTree::empty(subset)));
        }
        let best = match self.weight_for(mask) {
            Some(w) => w,
            None => return Ok(None),
        };
        let v = (0..self.n)
            .find(|&v| self.dp[mask][v] == best.0)
            .expect("argmin exists");
        let mut edges = BTreeSet::new();
        self.collect_edges(mask, VertexId(v as u32), &mut edges);
        let cand = Candidate {
            terminals: subset,
            edges,
            disconnected: false,
        };
        let tree = prune_to_tree(g, &cand)?;
        debug_assert_eq!(tree.weight(), best);
        Ok(Some(tree))
    }
}

/// Exact minimum Steiner tree via Dreyfus-Wagner. The returned table holds
/// the optimum for every terminal subset.
pub fn dreyfus_wagner(g: &Graph, terminals: &BTreeSet<VertexId>) -> Result<(SteinerTree, DwTable)> {
    if terminals.is_empty() {
        return Err(Error::Internal("dreyfus_wagner needs at least one terminal".into()));
    }
    let list: Vec<VertexId> = terminals.iter().copied().collect();
    let table = DwTable::build(g, &list)?;
    let full = (1usize << list.len()) - 1;
    match table.tree_for(g, full)? {
        Some(tree) => Ok((tree, table)),
        None => Err(Error::Infeasible),
    }
}

/// Convenience wrapper returning just the optimum weight.
pub fn dreyfus_wagner_weight(g: &Graph, terminals: &BTreeSet<VertexId>) -> Result<Weight> {
    let (tree, _) = dreyfus_wagner(g, terminals)?;
    Ok(tree.weight())
}

/// Exhaustive oracle: for every vertex superset of the terminals whose
/// induced subgraph is connected, take its minimum spanning tree, strip
/// non-terminal leaves, and keep the best.
pub fn brute_force_steiner(g: &Graph, terminals: &BTreeSet<VertexId>) -> Result<SteinerTree> {
    let n = g.vertex_count();
    if n > BRUTE_FORCE_VERTEX_CAP {
        return Err(Error::CapExceeded(format!(
            "{n} vertices exceed the brute-force cap of {BRUTE_FORCE_VERTEX_CAP}"
        )));
    }
    if terminals.len() <= 1 {
        return Ok(SteinerTree::empty(terminals.clone()));
    }
    let tmask: u32 = terminals.iter().map(|t| 1u32 << t.index()).sum();
    let mut best: Option<SteinerTree> = None;
    for mask in 0u32..(1 << n) {
        if mask & tmask != tmask {
            continue;
        }
        let members: Vec<usize> = (0..n).filter(|&v| mask >> v & 1 == 1).collect();
        let index_of = |v: VertexId| members.binary_search(&v.index()).ok();
        // induced edges, sorted for a deterministic Kruskal
        let mut edges: Vec<(Weight, EdgeKey)> = g
            .edges()
            .iter()
            .filter(|e| index_of(e.u).is_some() && index_of(e.v).is_some())
            .map(|e| (e.w, (e.u, e.v)))
            .collect();
        edges.sort();
        let mut uf = UnionFind::new(members.len());
        let mut chosen: BTreeSet<EdgeKey> = BTreeSet::new();
        for (_, (u, v)) in edges {
            if uf.union(index_of(u).unwrap(), index_of(v).unwrap()) {
                chosen.insert((u, v));
            }
        }
        if chosen.len() + 1 != members.len() {
            continue; // induced subgraph disconnected
        }
        let cand = Candidate {
            terminals: terminals.clone(),
            edges: chosen,
            disconnected: false,
        };
        let tree = prune_to_tree(g, &cand)?;
        let better = match &best {
            None => true,
            Some(b) => tree.tie_break_cmp(b) == std::cmp::Ordering::Less,
        };
        if better {
            best = Some(tree);
        }
    }
    best.ok_or(Error::Infeasible)
}
