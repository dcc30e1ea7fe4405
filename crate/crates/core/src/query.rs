//! Online query answering: separator-based recombination (`stvs`) and the
//! bottom-up traversal over the nice decomposition.
//!
//! A query walks from the terminals' induced roots up to their LCA. At each
//! node it maintains a working set: the optimum tree for every vertex subset
//! of (current bag + terminals accumulated below), up to a key-size cap.
//! Forget nodes migrate or drop a vertex, introduce nodes extend every key
//! with the new vertex (bag-table copies where possible, `stvs` otherwise),
//! and join nodes merge the second child's accumulated terminals one by one
//! with the join bag as the separator.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::time::Instant;

use crate::decomp::{is_separator, lca, NodeKind};
use crate::error::{Error, Result};
use crate::graph::{graph_union, prune_to_tree, Candidate, Graph, SteinerTree, VertexId};
use crate::index::{SteinerIndex, TableEntry, TableMap, TerminalKey};

/// Outcome of a sub-tree lookup inside `stvs`.
#[derive(Debug, Clone)]
pub enum Resolved {
    Tree(SteinerTree),
    /// Known to have no tree (cross-component); the candidate just loses.
    Infeasible,
    /// Never computed: an index or traversal bug, not a data condition.
    Missing,
}

/// Traversal state at one decomposition node: optimum trees for every key
/// over `bag ∪ acc` up to the working key-size cap.
#[derive(Debug, Clone)]
pub struct WorkingSet {
    pub node: usize,
    pub bag: BTreeSet<VertexId>,
    /// Query terminals accumulated below this node (forgotten or merged in).
    pub acc: BTreeSet<VertexId>,
    pub entries: TableMap,
}

impl WorkingSet {
    pub fn ground(&self) -> BTreeSet<VertexId> {
        self.bag.union(&self.acc).copied().collect()
    }
}

#[derive(Debug, Clone)]
pub struct QueryStats {
    pub nodes_visited: usize,
    pub visited: Vec<usize>,
    pub stvs_calls: u64,
    pub wall_ms: f64,
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone)]
pub struct QueryResult {
    pub tree: SteinerTree,
    pub stats: QueryStats,
}

/// Separator-based recombination: the optimum tree spanning
/// `s ∪ {v, v0}`, minimized over every separator vertex `w ∈ c` and every
/// disjoint bipartition of `s`, combining two sub-trees through `w`.
///
/// `c` must be a `(v, v0)`-vertex separator (the caller's obligation;
/// checked in debug builds on small graphs). Sub-trees come from `lookup`;
/// a `Missing` lookup is an internal error, an `Infeasible` one merely
/// drops that candidate. Keys that collapse below two vertices resolve to
/// empty weight-zero trees without consulting the lookup.
pub fn stvs<F>(
    g: &Graph,
    v: VertexId,
    v0: VertexId,
    s: &BTreeSet<VertexId>,
    c: &BTreeSet<VertexId>,
    lookup: F,
    calls: &mut u64,
) -> Result<TableEntry>
where
    F: Fn(&TerminalKey) -> Resolved,
{
    *calls += 1;
    debug_assert!(
        g.vertex_count() > 64 || is_separator(g, c, v, v0),
        "stvs called without a valid separator"
    );
    let mut target: BTreeSet<VertexId> = s.clone();
    target.insert(v);
    target.insert(v0);
    if target.len() <= 1 {
        return Ok(TableEntry::Tree(SteinerTree::empty(target)));
    }

    let resolve = |set: &BTreeSet<VertexId>| -> Result<Option<SteinerTree>> {
        if set.len() <= 1 {
            return Ok(Some(SteinerTree::empty(set.clone())));
        }
        match lookup(&TerminalKey::from_set(set)) {
            Resolved::Tree(t) => Ok(Some(t)),
            Resolved::Infeasible => Ok(None),
            Resolved::Missing => Err(Error::Internal(format!(
                "stvs lookup missing for key {set:?}"
            ))),
        }
    };

    let svec: Vec<VertexId> = s.iter().copied().collect();
    let mut best: Option<SteinerTree> = None;
    for &w in c {
        for mask in 0u32..(1 << svec.len()) {
            let mut key1: BTreeSet<VertexId> = [w, v].into_iter().collect();
            let mut key2: BTreeSet<VertexId> = [w, v0].into_iter().collect();
            for (i, &t) in svec.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    key1.insert(t);
                } else {
                    key2.insert(t);
                }
            }
            let t1 = match resolve(&key1)? {
                Some(t) => t,
                None => continue,
            };
            let t2 = match resolve(&key2)? {
                Some(t) => t,
                None => continue,
            };
            let union = graph_union(&t1, &t2);
            if union.disconnected {
                continue;
            }
            let cand = Candidate {
                terminals: target.clone(),
                edges: union.edges,
                disconnected: false,
            };
            let pruned = match prune_to_tree(g, &cand) {
                Ok(t) => t,
                Err(Error::Infeasible) => continue,
                Err(e) => return Err(e),
            };
            let better = match &best {
                None => true,
                Some(b) => pruned.tie_break_cmp(b) == std::cmp::Ordering::Less,
            };
            if better {
                best = Some(pruned);
            }
        }
    }
    Ok(match best {
        Some(t) => TableEntry::Tree(t),
        None => TableEntry::Infeasible,
    })
}

/// Forget transition: the vertex leaves the bag. A query terminal migrates
/// into the accumulated set and every key survives; any other vertex takes
/// all keys mentioning it along.
pub fn handle_forget(mut ws: WorkingSet, removed: VertexId, is_terminal: bool) -> WorkingSet {
    ws.bag.remove(&removed);
    if is_terminal {
        ws.acc.insert(removed);
    } else {
        ws.entries.retain(|k, _| !k.contains(removed));
    }
    ws
}

/// Nonempty subsets of `items` with at most `max_len` elements.
fn subsets_up_to(items: &[VertexId], max_len: usize) -> Vec<Vec<VertexId>> {
    let mut out = Vec::new();
    let mut cur: Vec<VertexId> = Vec::new();
    fn rec(
        items: &[VertexId],
        max_len: usize,
        start: usize,
        cur: &mut Vec<VertexId>,
        out: &mut Vec<Vec<VertexId>>,
    ) {
        if !cur.is_empty() {
            out.push(cur.clone());
        }
        if cur.len() == max_len {
            return;
        }
        for i in start..items.len() {
            cur.push(items[i]);
            rec(items, max_len, i + 1, cur, out);
            cur.pop();
        }
    }
    rec(items, max_len, 0, &mut cur, &mut out);
    out
}

/// Introduce transition: extend the working set with every key containing
/// the new vertex. Keys inside the node's own bag are read straight from
/// the precomputed table; keys reaching accumulated terminals are built by
/// `stvs` with the child bag as the separator, inserting terminals in
/// ascending order so every sub-lookup is already available.
pub fn handle_introduce(
    g: &Graph,
    ws: WorkingSet,
    added: VertexId,
    node_table: &TableMap,
    cap: usize,
    calls: &mut u64,
) -> Result<WorkingSet> {
    let child_bag = ws.bag.clone();
    let mut new_bag = ws.bag.clone();
    new_bag.insert(added);

    let ground_rest: Vec<VertexId> = ws.ground().iter().copied().collect();
    let mut grouped: BTreeMap<Option<VertexId>, Vec<BTreeSet<VertexId>>> = BTreeMap::new();
    for subset in subsets_up_to(&ground_rest, cap.saturating_sub(1)) {
        let set: BTreeSet<VertexId> = subset.into_iter().collect();
        let max_acc = set.iter().rev().find(|t| ws.acc.contains(t)).copied();
        grouped.entry(max_acc).or_default().push(set);
    }

    let mut new_entries = TableMap::new();
    // None sorts first: pure-bag keys are direct table reads
    for (max_acc, sets) in grouped {
        for rest in sets {
            let mut key_set = rest.clone();
            key_set.insert(added);
            let key = TerminalKey::from_set(&key_set);
            let entry = match max_acc {
                None => {
                    debug_assert!(rest.iter().all(|x| child_bag.contains(x)));
                    node_table
                        .get(&key)
                        .cloned()
                        .ok_or_else(|| {
                            Error::Internal(format!("bag table entry missing for {key:?}"))
                        })?
                }
                Some(term) => {
                    let mut w: BTreeSet<VertexId> = rest.clone();
                    w.remove(&term);
                    let lookup = |k: &TerminalKey| {
                        let from = if k.contains(added) {
                            &new_entries
                        } else {
                            &ws.entries
                        };
                        match from.get(k) {
                            Some(TableEntry::Tree(t)) => Resolved::Tree(t.clone()),
                            Some(TableEntry::Infeasible) => Resolved::Infeasible,
                            None => Resolved::Missing,
                        }
                    };
                    stvs(g, term, added, &w, &child_bag, lookup, calls)?
                }
            };
            new_entries.insert(key, entry);
        }
    }
    let mut entries = ws.entries;
    entries.extend(new_entries);
    Ok(WorkingSet {
        node: ws.node,
        bag: new_bag,
        acc: ws.acc,
        entries,
    })
}

/// Join transition: fold the right child's accumulated terminals into the
/// left state one at a time, with the join bag as the separator. Keys lying
/// entirely on the right side are copied from the right state; mixed keys
/// are relaxed to a fixpoint (candidates of equal size may feed each other
/// within one insertion step, so a single pass is not enough).
pub fn handle_join(
    g: &Graph,
    left: WorkingSet,
    right: &WorkingSet,
    cap: usize,
    calls: &mut u64,
) -> Result<WorkingSet> {
    if left.bag != right.bag {
        return Err(Error::InvalidDecomposition(
            "join children have different bags".into(),
        ));
    }
    debug_assert!(left.acc.intersection(&right.acc).next().is_none());
    let bag = left.bag.clone();
    let mut result = left;
    let right_side: BTreeSet<VertexId> = bag.union(&right.acc).copied().collect();

    for &t in &right.acc {
        let ground_rest: Vec<VertexId> = result.ground().iter().copied().collect();
        let mut new_entries = TableMap::new();
        let mut fix: Vec<BTreeSet<VertexId>> = Vec::new();
        for subset in subsets_up_to(&ground_rest, cap.saturating_sub(1)) {
            let rest: BTreeSet<VertexId> = subset.into_iter().collect();
            let mut key_set = rest.clone();
            key_set.insert(t);
            if rest.iter().all(|x| right_side.contains(x)) {
                let key = TerminalKey::from_set(&key_set);
                let entry = result
                    .entries
                    .get(&key)
                    .or_else(|| right.entries.get(&key))
                    .cloned()
                    .ok_or_else(|| {
                        Error::Internal(format!("right-side entry missing for {key:?}"))
                    })?;
                new_entries.insert(key, entry);
            } else {
                fix.push(key_set);
            }
        }
        // anchors separated from t by the bag: bag vertices (degenerate)
        // and terminals accumulated on the left side
        let left_anchor: BTreeSet<VertexId> = result
            .ground()
            .difference(&right_side)
            .copied()
            .chain(bag.iter().copied())
            .collect();
        let mut values: TableMap = fix
            .iter()
            .map(|k| (TerminalKey::from_set(k), TableEntry::Infeasible))
            .collect();
        loop {
            let mut changed = false;
            for key_set in &fix {
                let key = TerminalKey::from_set(key_set);
                for &v0 in key_set.iter().filter(|x| left_anchor.contains(x)) {
                    let mut w: BTreeSet<VertexId> = key_set.clone();
                    w.remove(&t);
                    w.remove(&v0);
                    let cand = {
                        let lookup = |k: &TerminalKey| {
                            let from = if k.contains(t) {
                                new_entries.get(k).or_else(|| values.get(k))
                            } else {
                                result.entries.get(k)
                            };
                            match from {
                                Some(TableEntry::Tree(tr)) => Resolved::Tree(tr.clone()),
                                Some(TableEntry::Infeasible) => Resolved::Infeasible,
                                None => Resolved::Missing,
                            }
                        };
                        stvs(g, t, v0, &w, &bag, lookup, calls)?
                    };
                    let better = match (&cand, values.get(&key)) {
                        (TableEntry::Tree(c), Some(TableEntry::Tree(cur))) => {
                            c.tie_break_cmp(cur) == std::cmp::Ordering::Less
                        }
                        (TableEntry::Tree(_), Some(TableEntry::Infeasible)) => true,
                        _ => false,
                    };
                    if better {
                        values.insert(key.clone(), cand);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        new_entries.extend(values);
        result.entries.extend(new_entries);
        result.acc.insert(t);
    }
    Ok(result)
}

/// The node order a query walks: every node on the paths from the
/// terminals' induced roots to their LCA, deepest first. Returns
/// `(order, lca)`.
pub fn traversal_plan(idx: &SteinerIndex, s: &BTreeSet<VertexId>) -> (Vec<usize>, usize) {
    let td = &idx.ntd.td;
    let roots: BTreeSet<usize> = s.iter().map(|t| idx.roots.root_of[t.index()]).collect();
    let meet = lca(td, &roots);
    let mut nodes: BTreeSet<usize> = BTreeSet::new();
    for &r in &roots {
        let mut cur = r;
        loop {
            nodes.insert(cur);
            if cur == meet {
                break;
            }
            cur = td.parent[cur].expect("lca is an ancestor of every root");
        }
    }
    let depth = td.depths();
    let mut order: Vec<usize> = nodes.into_iter().collect();
    order.sort_by_key(|&x| (std::cmp::Reverse(depth[x]), x));
    (order, meet)
}

/// Initial working set at a minimal traversal node: the precomputed bag
/// table, no accumulated terminals.
pub fn basis_state(idx: &SteinerIndex, node: usize) -> WorkingSet {
    WorkingSet {
        node,
        bag: idx.ntd.td.bags[node].clone(),
        acc: BTreeSet::new(),
        entries: (*idx.tables[node].entries).clone(),
    }
}

/// Answer an exact Steiner-tree query from the index.
pub fn query(idx: &SteinerIndex, g: &Graph, s: &BTreeSet<VertexId>) -> Result<QueryResult> {
    query_instrumented(idx, g, s, &mut |_| {})
}

/// Same as [`query`], invoking `inspect` with the working set after every
/// processed node. Used by verification harnesses.
pub fn query_instrumented(
    idx: &SteinerIndex,
    g: &Graph,
    s: &BTreeSet<VertexId>,
    inspect: &mut dyn FnMut(&WorkingSet),
) -> Result<QueryResult> {
    let start = Instant::now();
    if s.len() < 2 {
        return Err(Error::InvalidQuery(format!(
            "need at least 2 terminals, got {}",
            s.len()
        )));
    }
    if s.len() > idx.l {
        return Err(Error::Capacity {
            got: s.len(),
            cap: idx.l,
        });
    }
    for t in s {
        if t.index() >= g.vertex_count() {
            return Err(Error::UnknownVertex(t.0));
        }
    }
    if idx.graph_hash != g.content_hash() {
        return Err(Error::HashMismatch {
            expected: crate::index::hex(&idx.graph_hash),
            actual: crate::index::hex(&g.content_hash()),
        });
    }
    // working keys kept up to |S|+2 vertices, bounded by the table depth l
    let cap = (s.len() + 2).min(idx.l);
    let mut calls = 0u64;
    let (order, meet) = traversal_plan(idx, s);
    let td = &idx.ntd.td;
    let mut states: HashMap<usize, WorkingSet> = HashMap::new();

    for &node in &order {
        let kid_states: Vec<WorkingSet> = td.children[node]
            .iter()
            .filter_map(|c| states.remove(c))
            .collect();
        let ws = if kid_states.is_empty() {
            basis_state(idx, node)
        } else {
            match idx.ntd.kinds[node] {
                NodeKind::Leaf => {
                    return Err(Error::InvalidDecomposition(
                        "leaf node has a child state".into(),
                    ))
                }
                NodeKind::Forget(v) => {
                    let [child] = <[WorkingSet; 1]>::try_from(kid_states)
                        .map_err(|_| Error::Internal("forget node with two states".into()))?;
                    handle_forget(child, v, s.contains(&v))
                }
                NodeKind::Introduce(v) => {
                    let [child] = <[WorkingSet; 1]>::try_from(kid_states)
                        .map_err(|_| Error::Internal("introduce node with two states".into()))?;
                    handle_introduce(g, child, v, &idx.tables[node].entries, cap, &mut calls)?
                }
                NodeKind::Join => {
                    let mut iter = kid_states.into_iter();
                    let first = iter.next().unwrap();
                    match iter.next() {
                        // only one side carries terminals: nothing to merge
                        None => first,
                        Some(second) => handle_join(g, first, &second, cap, &mut calls)?,
                    }
                }
            }
        };
        let mut ws = ws;
        ws.node = node;
        inspect(&ws);
        states.insert(node, ws);
    }

    let final_ws = states
        .remove(&meet)
        .ok_or_else(|| Error::Internal("no state at the traversal meet point".into()))?;
    let key = TerminalKey::from_set(s);
    let entry = final_ws
        .entries
        .get(&key)
        .ok_or_else(|| Error::Internal(format!("answer key missing: {key:?}")))?;
    let tree = match entry {
        TableEntry::Tree(t) => t.clone(),
        TableEntry::Infeasible => return Err(Error::Infeasible),
    };
    let stats = QueryStats {
        nodes_visited: order.len(),
        visited: order,
        stvs_calls: calls,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
        height: idx.height,
        width: idx.width,
    };
    Ok(QueryResult { tree, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomp::{decompose, to_nice, Heuristic};
    use crate::gen::{random_connected_graph, random_terminals, GenParams};
    use crate::graph::{shortest_path, Weight};
    use crate::index::build_index;
    use crate::oracle::{dreyfus_wagner, dreyfus_wagner_weight, DwTable};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn vid(i: u32) -> VertexId {
        VertexId(i)
    }

    fn graph(n: usize, edges: &[(u32, u32, u64)]) -> Graph {
        Graph::new(n, edges.to_vec(), 1, (1..=n as u32).collect()).unwrap()
    }

    fn set(vs: &[u32]) -> BTreeSet<VertexId> {
        vs.iter().map(|&v| vid(v)).collect()
    }

    /// Lookup backed by a full Dreyfus-Wagner table over all graph vertices.
    fn dw_lookup(g: &Graph, table: &DwTable) -> impl Fn(&TerminalKey) -> Resolved {
        let g = g.clone();
        let table = table.clone();
        move |key: &TerminalKey| {
            let mask = match table.mask_of(&key.to_set()) {
                Some(m) => m,
                None => return Resolved::Missing,
            };
            match table.tree_for(&g, mask) {
                Ok(Some(t)) => Resolved::Tree(t),
                Ok(None) => Resolved::Infeasible,
                Err(_) => Resolved::Missing,
            }
        }
    }

    #[test]
    fn stvs_composes_two_paths() {
        // v(0) - w(1) - v0(2), weights 2 and 3
        let g = graph(3, &[(0, 1, 2), (1, 2, 3)]);
        let all: Vec<VertexId> = g.vertices().collect();
        let table = DwTable::build(&g, &all).unwrap();
        let mut calls = 0;
        let entry = stvs(
            &g,
            vid(0),
            vid(2),
            &BTreeSet::new(),
            &set(&[1]),
            dw_lookup(&g, &table),
            &mut calls,
        )
        .unwrap();
        let tree = entry.as_tree().unwrap();
        assert_eq!(tree.weight(), Weight(5));
        assert_eq!(tree.edges().len(), 2);
        assert_eq!(calls, 1);
    }

    #[test]
    fn stvs_degenerate_collapses_to_empty() {
        let g = graph(2, &[(0, 1, 1)]);
        let mut calls = 0;
        let entry = stvs(
            &g,
            vid(0),
            vid(0),
            &BTreeSet::new(),
            &set(&[0]),
            |_| Resolved::Missing,
            &mut calls,
        )
        .unwrap();
        let tree = entry.as_tree().unwrap();
        assert!(tree.is_empty());
        assert_eq!(tree.weight(), Weight::ZERO);
    }

    #[test]
    fn stvs_with_full_separator_matches_dreyfus_wagner() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        for i in 0..30 {
            let g = random_connected_graph(
                &mut rng,
                &GenParams {
                    n: 5 + (i % 5),
                    extra_edges: i % 4,
                    max_weight: 9,
                },
            );
            let all: Vec<VertexId> = g.vertices().collect();
            let table = DwTable::build(&g, &all).unwrap();
            let n = g.vertex_count() as u32;
            let v = vid(rng.gen_range(0..n));
            let v0 = vid(rng.gen_range(0..n));
            let s = random_terminals(&mut rng, &g, 2);
            let c: BTreeSet<VertexId> = g.vertices().collect();
            let mut calls = 0;
            let entry = stvs(&g, v, v0, &s, &c, dw_lookup(&g, &table), &mut calls).unwrap();
            let mut full: BTreeSet<VertexId> = s.clone();
            full.insert(v);
            full.insert(v0);
            let expected = if full.len() >= 2 {
                dreyfus_wagner_weight(&g, &full).unwrap()
            } else {
                Weight::ZERO
            };
            assert_eq!(entry.as_tree().unwrap().weight(), expected);
        }
    }

    #[test]
    fn forget_nonterminal_filters_keys() {
        let g = graph(3, &[(0, 1, 1), (1, 2, 1), (0, 2, 1)]);
        let nice = to_nice(&decompose(&g, Heuristic::MinDegree));
        let idx = build_index(&g, &nice, 3).unwrap();
        let node = (0..nice.td.node_count())
            .find(|&i| nice.td.bags[i].len() == 3)
            .unwrap();
        let ws = basis_state(&idx, node);
        assert_eq!(ws.entries.len(), 4); // ab, ac, bc, abc

        let dropped = handle_forget(ws.clone(), vid(2), false);
        assert_eq!(dropped.entries.len(), 1);
        assert!(dropped.entries.contains_key(&TerminalKey::from_set(&set(&[0, 1]))));

        // terminal case: keys and count unchanged, vertex migrates
        let kept = handle_forget(ws.clone(), vid(2), true);
        assert_eq!(kept.entries.len(), 4);
        assert!(kept.acc.contains(&vid(2)));
        assert_eq!(kept.ground(), ws.ground());

        // removed vertex absent from all keys: map unchanged either way
        let no_v = handle_forget(dropped.clone(), vid(2), false);
        assert_eq!(no_v.entries, dropped.entries);
    }

    #[test]
    fn zero_traversal_answers_from_bag_table() {
        let g = graph(3, &[(0, 1, 1), (1, 2, 1), (0, 2, 1)]);
        let nice = to_nice(&decompose(&g, Heuristic::MinDegree));
        let idx = build_index(&g, &nice, 3).unwrap();
        let s = set(&[0, 1, 2]);
        let res = query(&idx, &g, &s).unwrap();
        assert_eq!(res.tree.weight(), Weight(2));
    }

    #[test]
    fn adjacent_terminals_take_the_light_edge() {
        let g = graph(4, &[(0, 1, 1), (1, 2, 5), (2, 3, 5), (0, 3, 5)]);
        let nice = to_nice(&decompose(&g, Heuristic::MinDegree));
        let idx = build_index(&g, &nice, 3).unwrap();
        let res = query(&idx, &g, &set(&[0, 1])).unwrap();
        assert_eq!(res.tree.weight(), Weight(1));
        assert_eq!(res.tree.edges().len(), 1);
    }

    #[test]
    fn query_matches_dreyfus_wagner_on_random_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        for i in 0..60 {
            let g = random_connected_graph(
                &mut rng,
                &GenParams {
                    n: 6 + (i % 15),
                    extra_edges: 2 + (i % 6),
                    max_weight: 10,
                },
            );
            let nice = to_nice(&decompose(&g, Heuristic::MinDegree));
            let idx = build_index(&g, &nice, 5).unwrap();
            let k = 2 + (i % 4);
            let s = random_terminals(&mut rng, &g, k.min(g.vertex_count()));
            let res = query(&idx, &g, &s).unwrap();
            let expected = dreyfus_wagner_weight(&g, &s).unwrap();
            assert_eq!(res.tree.weight(), expected, "instance {i}, terminals {s:?}");
            res.tree.validate(&g).unwrap();
            assert!(res.tree.terminals().is_superset(&s));
        }
    }

    #[test]
    fn working_sets_stay_sound_against_oracle() {
        // every intermediate entry must be >= the global optimum for its
        // key, and keys within (bag + accumulated) must be exactly optimal
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        for i in 0..12 {
            let g = random_connected_graph(
                &mut rng,
                &GenParams {
                    n: 7 + (i % 5),
                    extra_edges: 2 + (i % 3),
                    max_weight: 8,
                },
            );
            let nice = to_nice(&decompose(&g, Heuristic::MinDegree));
            let idx = build_index(&g, &nice, 4).unwrap();
            let s = random_terminals(&mut rng, &g, 3);
            let g2 = g.clone();
            let mut check = |ws: &WorkingSet| {
                for (key, entry) in &ws.entries {
                    if let TableEntry::Tree(t) = entry {
                        let opt = dreyfus_wagner_weight(&g2, &key.to_set()).unwrap();
                        assert!(t.weight() >= opt);
                        if key.vertices().iter().all(|v| ws.ground().contains(v)) {
                            assert_eq!(t.weight(), opt, "key {key:?} at node {}", ws.node);
                        }
                    }
                }
            };
            let res = query_instrumented(&idx, &g, &s, &mut check).unwrap();
            assert_eq!(
                res.tree.weight(),
                dreyfus_wagner_weight(&g, &s).unwrap()
            );
        }
    }

    #[test]
    fn join_with_empty_right_is_identity() {
        let g = graph(3, &[(0, 1, 1), (1, 2, 1), (0, 2, 1)]);
        let nice = to_nice(&decompose(&g, Heuristic::MinDegree));
        let idx = build_index(&g, &nice, 3).unwrap();
        let node = (0..nice.td.node_count())
            .find(|&i| nice.td.bags[i].len() == 3)
            .unwrap();
        let left = basis_state(&idx, node);
        let right = basis_state(&idx, node);
        let mut calls = 0;
        let merged = handle_join(&g, left.clone(), &right, 4, &mut calls).unwrap();
        assert_eq!(merged.entries, left.entries);
        assert_eq!(calls, 0);
    }

    #[test]
    fn join_is_weight_commutative() {
        // drive real joins from full traversals, re-merging both ways
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        let mut joins_seen = 0;
        for i in 0..40 {
            let g = random_connected_graph(
                &mut rng,
                &GenParams {
                    n: 8 + (i % 8),
                    extra_edges: 3 + (i % 4),
                    max_weight: 9,
                },
            );
            let nice = to_nice(&decompose(&g, Heuristic::MinDegree));
            let idx = build_index(&g, &nice, 4).unwrap();
            let s = random_terminals(&mut rng, &g, 4.min(g.vertex_count()));
            let cap = (s.len() + 2).min(idx.l);

            // replay the traversal manually to capture join inputs
            let (order, meet) = traversal_plan(&idx, &s);
            let mut states: HashMap<usize, WorkingSet> = HashMap::new();
            let mut calls = 0u64;
            for &node in &order {
                let kids: Vec<WorkingSet> = idx.ntd.td.children[node]
                    .iter()
                    .filter_map(|c| states.remove(c))
                    .collect();
                let ws = if kids.is_empty() {
                    basis_state(&idx, node)
                } else {
                    match idx.ntd.kinds[node] {
                        NodeKind::Forget(v) => {
                            handle_forget(kids.into_iter().next().unwrap(), v, s.contains(&v))
                        }
                        NodeKind::Introduce(v) => handle_introduce(
                            &g,
                            kids.into_iter().next().unwrap(),
                            v,
                            &idx.tables[node].entries,
                            cap,
                            &mut calls,
                        )
                        .unwrap(),
                        NodeKind::Join => {
                            let mut it = kids.into_iter();
                            let a = it.next().unwrap();
                            match it.next() {
                                None => a,
                                Some(b) => {
                                    joins_seen += 1;
                                    let ab =
                                        handle_join(&g, a.clone(), &b, cap, &mut calls).unwrap();
                                    let ba =
                                        handle_join(&g, b.clone(), &a, cap, &mut calls).unwrap();
                                    for (key, e) in &ab.entries {
                                        if let Some(e2) = ba.entries.get(key) {
                                            match (e, e2) {
                                                (TableEntry::Tree(x), TableEntry::Tree(y)) => {
                                                    assert_eq!(x.weight(), y.weight(), "{key:?}")
                                                }
                                                (a, b) => assert_eq!(a, b),
                                            }
                                        }
                                    }
                                    ab
                                }
                            }
                        }
                        NodeKind::Leaf => unreachable!(),
                    }
                };
                let mut ws = ws;
                ws.node = node;
                states.insert(node, ws);
            }
            let final_ws = &states[&meet];
            let entry = final_ws.entries.get(&TerminalKey::from_set(&s)).unwrap();
            assert_eq!(
                entry.as_tree().unwrap().weight(),
                dreyfus_wagner_weight(&g, &s).unwrap()
            );
        }
        assert!(joins_seen > 0, "corpus never exercised a two-sided join");
    }

    #[test]
    fn capacity_and_input_errors() {
        let g = graph(4, &[(0, 1, 1), (1, 2, 1), (2, 3, 1)]);
        let nice = to_nice(&decompose(&g, Heuristic::MinDegree));
        let idx = build_index(&g, &nice, 2).unwrap();
        assert!(matches!(
            query(&idx, &g, &set(&[0, 1, 2])),
            Err(Error::Capacity { got: 3, cap: 2 })
        ));
        assert!(matches!(
            query(&idx, &g, &set(&[0])),
            Err(Error::InvalidQuery(_))
        ));
        assert!(matches!(
            query(&idx, &g, &set(&[0, 9])),
            Err(Error::UnknownVertex(9))
        ));
    }

    #[test]
    fn disconnected_terminals_report_infeasible() {
        let g = graph(4, &[(0, 1, 1), (2, 3, 1)]);
        let nice = to_nice(&decompose(&g, Heuristic::MinDegree));
        let idx = build_index(&g, &nice, 2).unwrap();
        assert!(matches!(
            query(&idx, &g, &set(&[0, 3])),
            Err(Error::Infeasible)
        ));
    }

    #[test]
    fn traversal_stays_on_root_paths() {
        let mut rng = ChaCha8Rng::seed_from_u64(79);
        for i in 0..20 {
            let g = random_connected_graph(
                &mut rng,
                &GenParams {
                    n: 8 + (i % 10),
                    extra_edges: i % 5,
                    max_weight: 7,
                },
            );
            let nice = to_nice(&decompose(&g, Heuristic::MinDegree));
            let idx = build_index(&g, &nice, 4).unwrap();
            let s = random_terminals(&mut rng, &g, 3);
            let res = query(&idx, &g, &s).unwrap();
            // independent recomputation of the allowed node set
            let mut allowed: BTreeSet<usize> = BTreeSet::new();
            for t in &s {
                let mut paths: Vec<usize> = Vec::new();
                let mut cur = Some(idx.roots.root_of[t.index()]);
                while let Some(c) = cur {
                    paths.push(c);
                    cur = idx.ntd.td.parent[c];
                }
                allowed.extend(paths);
            }
            for node in &res.stats.visited {
                assert!(allowed.contains(node), "visited off-path node {node}");
            }
        }
    }

    #[test]
    fn weight_scaling_scales_answers() {
        let mut rng = ChaCha8Rng::seed_from_u64(83);
        for i in 0..10 {
            let g = random_connected_graph(
                &mut rng,
                &GenParams {
                    n: 8 + i,
                    extra_edges: 4,
                    max_weight: 9,
                },
            );
            let g7 = g.scaled_weights(7).unwrap();
            let s = random_terminals(&mut rng, &g, 3);
            let nice = to_nice(&decompose(&g, Heuristic::MinDegree));
            let idx = build_index(&g, &nice, 3).unwrap();
            let nice7 = to_nice(&decompose(&g7, Heuristic::MinDegree));
            let idx7 = build_index(&g7, &nice7, 3).unwrap();
            let w = query(&idx, &g, &s).unwrap().tree.weight();
            let w7 = query(&idx7, &g7, &s).unwrap().tree.weight();
            assert_eq!(w7.0, 7 * w.0);
        }
    }

    #[test]
    fn introduce_from_pure_bag_makes_no_stvs_calls() {
        // path graph: every introduce along the spine sees only bag keys
        let g = graph(2, &[(0, 1, 3)]);
        let nice = to_nice(&decompose(&g, Heuristic::MinDegree));
        let idx = build_index(&g, &nice, 2).unwrap();
        let node = (0..nice.td.node_count())
            .find(|&i| nice.td.bags[i].len() == 2)
            .unwrap();
        let child = WorkingSet {
            node,
            bag: set(&[0]),
            acc: BTreeSet::new(),
            entries: TableMap::new(),
        };
        let mut calls = 0;
        let ws =
            handle_introduce(&g, child, vid(1), &idx.tables[node].entries, 4, &mut calls).unwrap();
        assert_eq!(calls, 0);
        let entry = &ws.entries[&TerminalKey::from_set(&set(&[0, 1]))];
        assert_eq!(entry.as_tree().unwrap().weight(), Weight(3));
        assert_eq!(
            entry.as_tree().unwrap().weight(),
            shortest_path(&g, vid(0), vid(1)).unwrap().weight()
        );
    }

    #[test]
    fn introduce_with_one_accumulated_terminal() {
        // spec shape: ST_{t,v} via min over w in child bag of ST_{t,w} + ST_{w,v}
        let mut rng = ChaCha8Rng::seed_from_u64(89);
        for _ in 0..10 {
            let g = random_connected_graph(
                &mut rng,
                &GenParams {
                    n: 8,
                    extra_edges: 4,
                    max_weight: 9,
                },
            );
            let nice = to_nice(&decompose(&g, Heuristic::MinDegree));
            let idx = build_index(&g, &nice, 4).unwrap();
            let s = random_terminals(&mut rng, &g, 2);
            let g2 = g.clone();
            let mut checked = false;
            let mut check = |ws: &WorkingSet| {
                for t in &ws.acc {
                    for b in &ws.bag {
                        let key: BTreeSet<VertexId> = [*t, *b].into_iter().collect();
                        if let Some(TableEntry::Tree(tree)) =
                            ws.entries.get(&TerminalKey::from_set(&key))
                        {
                            checked = true;
                            assert_eq!(
                                tree.weight(),
                                dreyfus_wagner_weight(&g2, &key).unwrap()
                            );
                        }
                    }
                }
            };
            let _ = query_instrumented(&idx, &g, &s, &mut check).unwrap();
            let _ = checked;
        }
    }
}
