//! Tree decompositions: heuristic construction, validation, nice-form
//! normalization, induced-subtree roots, LCA, and separator checks.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use crate::error::{Error, Result};
use crate::graph::{Graph, VertexId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Heuristic {
    MinDegree,
    MinFill,
}

impl std::str::FromStr for Heuristic {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "min-degree" => Ok(Heuristic::MinDegree),
            "min-fill" => Ok(Heuristic::MinFill),
            other => Err(format!("unknown heuristic '{other}'; use min-degree or min-fill")),
        }
    }
}

/// Rooted tree decomposition. Node `i`'s bag is `bags[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeDecomposition {
    pub bags: Vec<BTreeSet<VertexId>>,
    pub parent: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
    pub root: usize,
}

impl TreeDecomposition {
    pub fn node_count(&self) -> usize {
        self.bags.len()
    }

    /// Largest bag size minus one.
    pub fn width(&self) -> usize {
        self.bags.iter().map(|b| b.len()).max().unwrap_or(1) - 1
    }

    pub fn depths(&self) -> Vec<usize> {
        let mut depth = vec![0usize; self.bags.len()];
        let mut queue = VecDeque::from([self.root]);
        while let Some(x) = queue.pop_front() {
            for &c in &self.children[x] {
                depth[c] = depth[x] + 1;
                queue.push_back(c);
            }
        }
        depth
    }

    pub fn height(&self) -> usize {
        self.depths().into_iter().max().unwrap_or(0)
    }

    /// Re-root the same undirected tree structure at `new_root`.
    pub fn rerooted(&self, new_root: usize) -> TreeDecomposition {
        let n = self.bags.len();
        let mut adj = vec![Vec::new(); n];
        for (c, p) in self.parent.iter().enumerate() {
            if let Some(p) = *p {
                adj[c].push(p);
                adj[p].push(c);
            }
        }
        let mut parent = vec![None; n];
        let mut children = vec![Vec::new(); n];
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([new_root]);
        seen[new_root] = true;
        while let Some(x) = queue.pop_front() {
            for &y in &adj[x] {
                if !seen[y] {
                    seen[y] = true;
                    parent[y] = Some(x);
                    children[x].push(y);
                    queue.push_back(y);
                }
            }
        }
        for c in &mut children {
            c.sort();
        }
        TreeDecomposition {
            bags: self.bags.clone(),
            parent,
            children,
            root: new_root,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Leaf,
    /// Bag equals child's bag plus this vertex.
    Introduce(VertexId),
    /// Bag equals child's bag minus this vertex.
    Forget(VertexId),
    /// Two children, both bags identical to this bag.
    Join,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NiceTreeDecomposition {
    pub td: TreeDecomposition,
    pub kinds: Vec<NodeKind>,
}

/// Map from each graph vertex to the root of its induced subtree: the
/// closest-to-root decomposition node whose bag contains it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InducedRootMap {
    pub root_of: Vec<usize>,
}

/// Heuristic tree decomposition via an elimination ordering. Deterministic:
/// ties go to the smallest vertex id. Always succeeds; the width depends on
/// the graph and heuristic.
pub fn decompose(g: &Graph, heuristic: Heuristic) -> TreeDecomposition {
    let n = g.vertex_count();
    assert!(n >= 1, "decompose needs at least one vertex");
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for e in g.edges() {
        adj[e.u.index()].insert(e.v.index());
        adj[e.v.index()].insert(e.u.index());
    }
    let mut alive: BTreeSet<usize> = (0..n).collect();
    let mut order: Vec<usize> = Vec::with_capacity(n);
    let mut bags: Vec<BTreeSet<VertexId>> = Vec::with_capacity(n);
    let mut elim_neighbors: Vec<Vec<usize>> = Vec::with_capacity(n);

    while !alive.is_empty() {
        let pick = match heuristic {
            Heuristic::MinDegree => alive
                .iter()
                .copied()
                .min_by_key(|&v| (adj[v].len(), v))
                .unwrap(),
            Heuristic::MinFill => alive
                .iter()
                .copied()
                .min_by_key(|&v| {
                    let nb: Vec<usize> = adj[v].iter().copied().collect();
                    let mut fill = 0usize;
                    for i in 0..nb.len() {
                        for j in (i + 1)..nb.len() {
                            if !adj[nb[i]].contains(&nb[j]) {
                                fill += 1;
                            }
                        }
                    }
                    (fill, v)
                })
                .unwrap(),
        };
        let nb: Vec<usize> = adj[pick].iter().copied().collect();
        let mut bag: BTreeSet<VertexId> = nb.iter().map(|&x| VertexId(x as u32)).collect();
        bag.insert(VertexId(pick as u32));
        bags.push(bag);
        elim_neighbors.push(nb.clone());
        order.push(pick);
        // clique-ify the neighborhood, then remove the vertex
        for i in 0..nb.len() {
            for j in (i + 1)..nb.len() {
                adj[nb[i]].insert(nb[j]);
                adj[nb[j]].insert(nb[i]);
            }
        }
        for &x in &nb {
            adj[x].remove(&pick);
        }
        adj[pick].clear();
        alive.remove(&pick);
    }

    let mut pos = vec![0usize; n];
    for (k, &v) in order.iter().enumerate() {
        pos[v] = k;
    }
    // node k attaches below the earliest-eliminated remaining neighbor
    let mut parent: Vec<Option<usize>> = vec![None; n];
    let mut roots: Vec<usize> = Vec::new();
    for k in 0..n {
        match elim_neighbors[k].iter().map(|&x| pos[x]).min() {
            Some(p) => parent[k] = Some(p),
            None => roots.push(k),
        }
    }
    // tie multiple component roots together under the first one
    let primary = roots[0];
    for &r in &roots[1..] {
        parent[r] = Some(primary);
    }
    let mut children = vec![Vec::new(); n];
    for (c, p) in parent.iter().enumerate() {
        if let Some(p) = *p {
            children[p].push(c);
        }
    }
    let td = TreeDecomposition {
        bags,
        parent,
        children,
        root: primary,
    };
    // deterministic rooting: smallest node id whose bag contains vertex 0
    let anchor = (0..td.node_count())
        .find(|&i| td.bags[i].contains(&VertexId(0)))
        .unwrap_or(primary);
    td.rerooted(anchor)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// Condition 1: a graph vertex appears in no bag.
    VertexUncovered(VertexId),
    /// Condition 2: no bag contains both endpoints of this edge.
    EdgeUncovered(VertexId, VertexId),
    /// Condition 3: the bags containing this vertex are not connected in the
    /// tree; the two named nodes hold the vertex but lie in different parts.
    DisconnectedVertex(VertexId, usize, usize),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::VertexUncovered(v) => write!(f, "vertex {v} appears in no bag"),
            Violation::EdgeUncovered(u, v) => write!(f, "edge ({u},{v}) covered by no bag"),
            Violation::DisconnectedVertex(v, a, b) => write!(
                f,
                "bags containing vertex {v} are disconnected (nodes {a} and {b})"
            ),
        }
    }
}

/// Check the three tree-decomposition conditions. Empty output means valid.
pub fn validate_decomposition(g: &Graph, td: &TreeDecomposition) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = g.vertex_count();
    let mut holders: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, bag) in td.bags.iter().enumerate() {
        for v in bag {
            holders[v.index()].push(i);
        }
    }
    for v in 0..n {
        if holders[v].is_empty() {
            out.push(Violation::VertexUncovered(VertexId(v as u32)));
        }
    }
    for e in g.edges() {
        let covered = td
            .bags
            .iter()
            .any(|bag| bag.contains(&e.u) && bag.contains(&e.v));
        if !covered {
            out.push(Violation::EdgeUncovered(e.u, e.v));
        }
    }
    // condition 3: BFS the tree restricted to bags holding v
    let mut adj = vec![Vec::new(); td.node_count()];
    for (c, p) in td.parent.iter().enumerate() {
        if let Some(p) = *p {
            adj[c].push(p);
            adj[p].push(c);
        }
    }
    for v in 0..n {
        let nodes = &holders[v];
        if nodes.len() <= 1 {
            continue;
        }
        let member: BTreeSet<usize> = nodes.iter().copied().collect();
        let mut seen: BTreeSet<usize> = BTreeSet::new();
        let mut queue = VecDeque::from([nodes[0]]);
        seen.insert(nodes[0]);
        while let Some(x) = queue.pop_front() {
            for &y in &adj[x] {
                if member.contains(&y) && seen.insert(y) {
                    queue.push_back(y);
                }
            }
        }
        if let Some(&missing) = nodes.iter().find(|x| !seen.contains(x)) {
            out.push(Violation::DisconnectedVertex(
                VertexId(v as u32),
                nodes[0],
                missing,
            ));
        }
    }
    out
}

struct NiceBuilder {
    bags: Vec<BTreeSet<VertexId>>,
    children: Vec<Vec<usize>>,
    kinds: Vec<NodeKind>,
}

impl NiceBuilder {
    fn push(&mut self, bag: BTreeSet<VertexId>, kind: NodeKind, children: Vec<usize>) -> usize {
        self.bags.push(bag);
        self.kinds.push(kind);
        self.children.push(children);
        self.bags.len() - 1
    }

    /// Chain from an existing node up to `target` bag: forget the extra
    /// vertices, then introduce the missing ones, ascending id order each.
    fn chain_to(&mut self, mut node: usize, target: &BTreeSet<VertexId>) -> usize {
        let current = self.bags[node].clone();
        for &v in current.difference(target) {
            let mut bag = self.bags[node].clone();
            bag.remove(&v);
            node = self.push(bag, NodeKind::Forget(v), vec![node]);
        }
        for &v in target.difference(&current) {
            let mut bag = self.bags[node].clone();
            bag.insert(v);
            node = self.push(bag, NodeKind::Introduce(v), vec![node]);
        }
        node
    }

    fn build(&mut self, td: &TreeDecomposition, old: usize) -> usize {
        let bag = td.bags[old].clone();
        let kids = &td.children[old];
        if kids.is_empty() {
            return self.push(bag, NodeKind::Leaf, vec![]);
        }
        let mut tops: Vec<usize> = Vec::with_capacity(kids.len());
        for &c in kids {
            let built = self.build(td, c);
            tops.push(self.chain_to(built, &bag));
        }
        let mut acc = tops[0];
        for &t in &tops[1..] {
            acc = self.push(bag.clone(), NodeKind::Join, vec![acc, t]);
        }
        acc
    }
}

/// Normalize to nice form: every internal node is an introduce, forget, or
/// join. The result decomposes the same graph with the same width, and its
/// node count stays within [`nice_size_bound`].
pub fn to_nice(td: &TreeDecomposition) -> NiceTreeDecomposition {
    let mut b = NiceBuilder {
        bags: Vec::new(),
        children: Vec::new(),
        kinds: Vec::new(),
    };
    let root = b.build(td, td.root);
    let n = b.bags.len();
    let mut parent = vec![None; n];
    for (p, kids) in b.children.iter().enumerate() {
        for &c in kids {
            parent[c] = Some(p);
        }
    }
    NiceTreeDecomposition {
        td: TreeDecomposition {
            bags: b.bags,
            parent,
            children: b.children,
            root,
        },
        kinds: b.kinds,
    }
}

/// The concrete linearity bound the nice transform commits to.
pub fn nice_size_bound(td: &TreeDecomposition) -> usize {
    let mut symdiff = 0usize;
    for (c, p) in td.parent.iter().enumerate() {
        if let Some(p) = *p {
            symdiff += td.bags[c].symmetric_difference(&td.bags[p]).count();
        }
    }
    4 * (symdiff + td.node_count())
}

impl NiceTreeDecomposition {
    /// Check each node's structural equation against its kind.
    pub fn validate_kinds(&self) -> Result<()> {
        let td = &self.td;
        for i in 0..td.node_count() {
            let kids = &td.children[i];
            let bag = &td.bags[i];
            match self.kinds[i] {
                NodeKind::Leaf => {
                    if !kids.is_empty() {
                        return Err(Error::InvalidDecomposition(format!(
                            "leaf node {i} has children"
                        )));
                    }
                }
                NodeKind::Introduce(v) => {
                    if kids.len() != 1 {
                        return Err(Error::InvalidDecomposition(format!(
                            "introduce node {i} must have exactly one child"
                        )));
                    }
                    let child = &td.bags[kids[0]];
                    let mut expect = child.clone();
                    if !expect.insert(v) || &expect != bag {
                        return Err(Error::InvalidDecomposition(format!(
                            "introduce node {i} bag is not child + {v}"
                        )));
                    }
                }
                NodeKind::Forget(v) => {
                    if kids.len() != 1 {
                        return Err(Error::InvalidDecomposition(format!(
                            "forget node {i} must have exactly one child"
                        )));
                    }
                    let child = &td.bags[kids[0]];
                    let mut expect = child.clone();
                    if !expect.remove(&v) || &expect != bag {
                        return Err(Error::InvalidDecomposition(format!(
                            "forget node {i} bag is not child - {v}"
                        )));
                    }
                }
                NodeKind::Join => {
                    if kids.len() != 2 {
                        return Err(Error::InvalidDecomposition(format!(
                            "join node {i} must have exactly two children"
                        )));
                    }
                    for &c in kids {
                        if &td.bags[c] != bag {
                            return Err(Error::InvalidDecomposition(format!(
                                "join node {i} child {c} bag differs"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// For every graph vertex, the closest-to-root node whose bag contains it.
pub fn induced_roots(ntd: &NiceTreeDecomposition) -> Result<InducedRootMap> {
    let td = &ntd.td;
    let n_vertices = 1 + td
        .bags
        .iter()
        .flat_map(|b| b.iter())
        .map(|v| v.index())
        .max()
        .ok_or_else(|| Error::InvalidDecomposition("decomposition has no bags".into()))?;
    let mut root_of: Vec<Option<usize>> = vec![None; n_vertices];
    // BFS from the root: the first node seen holding v is v's induced root
    let mut queue = VecDeque::from([td.root]);
    while let Some(x) = queue.pop_front() {
        for v in &td.bags[x] {
            if root_of[v.index()].is_none() {
                root_of[v.index()] = Some(x);
            }
        }
        for &c in &td.children[x] {
            queue.push_back(c);
        }
    }
    let mut out = Vec::with_capacity(n_vertices);
    for (v, slot) in root_of.into_iter().enumerate() {
        out.push(slot.ok_or_else(|| {
            Error::InvalidDecomposition(format!("vertex {v} appears in no bag"))
        })?);
    }
    Ok(InducedRootMap { root_of: out })
}

/// Deepest node that is an ancestor-or-self of every node in the set.
pub fn lca(td: &TreeDecomposition, nodes: &BTreeSet<usize>) -> usize {
    assert!(!nodes.is_empty(), "lca of an empty node set");
    let depth = td.depths();
    let mut iter = nodes.iter();
    let mut acc = *iter.next().unwrap();
    for &x in iter {
        acc = lca_pair(td, &depth, acc, x);
    }
    acc
}

fn lca_pair(td: &TreeDecomposition, depth: &[usize], mut a: usize, mut b: usize) -> usize {
    while depth[a] > depth[b] {
        a = td.parent[a].unwrap();
    }
    while depth[b] > depth[a] {
        b = td.parent[b].unwrap();
    }
    while a != b {
        a = td.parent[a].unwrap();
        b = td.parent[b].unwrap();
    }
    a
}

/// Tree path between two nodes, inclusive of both endpoints.
pub fn tree_path(td: &TreeDecomposition, a: usize, b: usize) -> Vec<usize> {
    let depth = td.depths();
    let meet = lca_pair(td, &depth, a, b);
    let mut up = Vec::new();
    let mut x = a;
    while x != meet {
        up.push(x);
        x = td.parent[x].unwrap();
    }
    up.push(meet);
    let mut down = Vec::new();
    let mut y = b;
    while y != meet {
        down.push(y);
        y = td.parent[y].unwrap();
    }
    up.extend(down.into_iter().rev());
    up
}

/// True iff removing `c` disconnects `u` from `v`. When either endpoint lies
/// inside `c` the separator is degenerate and the answer is true.
pub fn is_separator(g: &Graph, c: &BTreeSet<VertexId>, u: VertexId, v: VertexId) -> bool {
    if c.contains(&u) || c.contains(&v) {
        return true;
    }
    if u == v {
        return false;
    }
    let mut seen = vec![false; g.vertex_count()];
    let mut queue = VecDeque::from([u]);
    seen[u.index()] = true;
    while let Some(x) = queue.pop_front() {
        if x == v {
            return false;
        }
        for &(y, _) in g.neighbors(x) {
            if !seen[y.index()] && !c.contains(&y) {
                seen[y.index()] = true;
                queue.push_back(y);
            }
        }
    }
    true
}

// ---------------------------------------------------------------------------
// Text serialization: `td` header, `b` bag lines, `e` tree edges, optional
// `k` node-kind lines for nice decompositions. Ids and vertices are 1-based
// on disk.
// ---------------------------------------------------------------------------

pub fn write_td(td: &TreeDecomposition, kinds: Option<&[NodeKind]>) -> String {
    let n_vertices = 1 + td
        .bags
        .iter()
        .flat_map(|b| b.iter())
        .map(|v| v.index())
        .max()
        .unwrap_or(0);
    let mut out = String::new();
    out.push_str(&format!(
        "td {} {} {}\n",
        td.node_count(),
        td.width(),
        n_vertices
    ));
    for (i, bag) in td.bags.iter().enumerate() {
        out.push_str(&format!("b {}", i + 1));
        for v in bag {
            out.push_str(&format!(" {}", v.0 + 1));
        }
        out.push('\n');
    }
    for (c, p) in td.parent.iter().enumerate() {
        if let Some(p) = *p {
            out.push_str(&format!("e {} {}\n", p + 1, c + 1));
        }
    }
    if let Some(kinds) = kinds {
        for (i, k) in kinds.iter().enumerate() {
            let desc = match k {
                NodeKind::Leaf => "leaf".to_string(),
                NodeKind::Join => "join".to_string(),
                NodeKind::Introduce(v) => format!("introduce {}", v.0 + 1),
                NodeKind::Forget(v) => format!("forget {}", v.0 + 1),
            };
            out.push_str(&format!("k {} {desc}\n", i + 1));
        }
    }
    out
}

pub fn parse_td(text: &str) -> Result<(TreeDecomposition, Option<Vec<NodeKind>>)> {
    let mut bags: Vec<BTreeSet<VertexId>> = Vec::new();
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut kinds: BTreeMap<usize, NodeKind> = BTreeMap::new();
    let mut declared: Option<(usize, usize)> = None;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse { line: lineno, msg };
        match toks[0] {
            "td" => {
                let n: usize = toks
                    .get(1)
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| err("bad td header".into()))?;
                let w: usize = toks
                    .get(2)
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| err("bad td header".into()))?;
                declared = Some((n, w));
                bags = vec![BTreeSet::new(); n];
            }
            "b" => {
                let id: usize = toks
                    .get(1)
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| err("bad bag id".into()))?;
                if id == 0 || id > bags.len() {
                    return Err(err(format!("bag id {id} out of range")));
                }
                for t in &toks[2..] {
                    let v: u32 = t.parse().map_err(|_| err(format!("bad vertex '{t}'")))?;
                    if v == 0 {
                        return Err(err("vertex ids are 1-based".into()));
                    }
                    bags[id - 1].insert(VertexId(v - 1));
                }
            }
            "e" => {
                let p: usize = toks
                    .get(1)
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| err("bad edge".into()))?;
                let c: usize = toks
                    .get(2)
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| err("bad edge".into()))?;
                edges.push((p - 1, c - 1));
            }
            "k" => {
                let id: usize = toks
                    .get(1)
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| err("bad kind line".into()))?;
                let kind = match toks.get(2).copied() {
                    Some("leaf") => NodeKind::Leaf,
                    Some("join") => NodeKind::Join,
                    Some("introduce") => NodeKind::Introduce(VertexId(
                        toks.get(3)
                            .and_then(|t| t.parse::<u32>().ok())
                            .ok_or_else(|| err("bad introduce vertex".into()))?
                            - 1,
                    )),
                    Some("forget") => NodeKind::Forget(VertexId(
                        toks.get(3)
                            .and_then(|t| t.parse::<u32>().ok())
                            .ok_or_else(|| err("bad forget vertex".into()))?
                            - 1,
                    )),
                    other => return Err(err(format!("unknown node kind {other:?}"))),
                };
                kinds.insert(id - 1, kind);
            }
            _ => return Err(err(format!("unknown record '{}'", toks[0]))),
        }
    }
    let (n, w) = declared.ok_or_else(|| Error::Parse {
        line: 0,
        msg: "missing td header".into(),
    })?;
    let mut parent = vec![None; n];
    let mut children = vec![Vec::new(); n];
    for (p, c) in edges {
        if p >= n || c >= n {
            return Err(Error::Parse {
                line: 0,
                msg: "tree edge references unknown node".into(),
            });
        }
        parent[c] = Some(p);
        children[p].push(c);
    }
    let root = (0..n)
        .find(|&i| parent[i].is_none())
        .ok_or_else(|| Error::Parse {
            line: 0,
            msg: "decomposition has no root".into(),
        })?;
    let td = TreeDecomposition {
        bags,
        parent,
        children,
        root,
    };
    if td.width() != w {
        return Err(Error::Parse {
            line: 0,
            msg: format!("header width {w} does not match bags (width {})", td.width()),
        });
    }
    let kinds = if kinds.is_empty() {
        None
    } else {
        if kinds.len() != n {
            return Err(Error::Parse {
                line: 0,
                msg: "node kinds present but incomplete".into(),
            });
        }
        Some(kinds.into_values().collect())
    };
    Ok((td, kinds))
}
