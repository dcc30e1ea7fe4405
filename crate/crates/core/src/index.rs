//! Offline index construction: per-bag Steiner tables over a nice tree
//! decomposition, plus the versioned binary on-disk format.
//!
//! Each bag's table holds the exact optimum tree *in the full graph* for
//! every subset of the bag of size `2..=l`. Tables are produced by one
//! Dreyfus-Wagner run per distinct bag vertex set and shared across nodes
//! with equal bags, so join children get identical tables for free.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use crate::decomp::{induced_roots, InducedRootMap, NiceTreeDecomposition, NodeKind};
use crate::error::{Error, Result};
use crate::graph::{edge_key, EdgeKey, Graph, SteinerTree, VertexId, Weight};
use crate::oracle::{DwTable, DW_TERMINAL_CAP};

/// Canonical sorted terminal subset, the key of every table.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TerminalKey(Vec<VertexId>);

impl TerminalKey {
    pub fn from_set(s: &BTreeSet<VertexId>) -> Self {
        TerminalKey(s.iter().copied().collect())
    }

    pub fn vertices(&self) -> &[VertexId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, v: VertexId) -> bool {
        self.0.binary_search(&v).is_ok()
    }

    pub fn to_set(&self) -> BTreeSet<VertexId> {
        self.0.iter().copied().collect()
    }
}

/// A stored optimum, or an explicit marker that no tree exists for the key
/// (terminals in different components). Absence of a key altogether means
/// the entry was never computed, which is a bug, not data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TableEntry {
    Tree(SteinerTree),
    Infeasible,
}

impl TableEntry {
    pub fn as_tree(&self) -> Option<&SteinerTree> {
        match self {
            TableEntry::Tree(t) => Some(t),
            TableEntry::Infeasible => None,
        }
    }
}

pub type TableMap = BTreeMap<TerminalKey, TableEntry>;

/// Steiner table of one decomposition node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BagTable {
    pub node_id: usize,
    pub entries: Arc<TableMap>,
}

/// The full query index: nice decomposition, induced roots, and one bag
/// table per node, tied to a specific graph by content hash.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SteinerIndex {
    pub graph_hash: [u8; 32],
    pub ntd: NiceTreeDecomposition,
    pub roots: InducedRootMap,
    pub l: usize,
    pub width: usize,
    pub height: usize,
    pub tables: Vec<BagTable>,
}

impl SteinerIndex {
    pub fn entry_count(&self) -> usize {
        self.tables.iter().map(|t| t.entries.len()).sum()
    }

    /// Upper bound from the bag sizes: sum over bags of C(|bag|, k) for
    /// k = 2..=l. Equality holds whenever every subset was computed.
    pub fn entry_count_bound(&self) -> usize {
        self.ntd
            .td
            .bags
            .iter()
            .map(|bag| {
                (2..=self.l.min(bag.len()))
                    .map(|k| binomial(bag.len(), k))
                    .sum::<usize>()
            })
            .sum()
    }
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let mut acc = 1usize;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

fn subsets_of_size(items: &[VertexId], k: usize) -> Vec<Vec<VertexId>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(items: &[VertexId], k: usize, start: usize, cur: &mut Vec<VertexId>, out: &mut Vec<Vec<VertexId>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            cur.push(items[i]);
            rec(items, k, i + 1, cur, out);
            cur.pop();
        }
    }
    rec(items, k, 0, &mut cur, &mut out);
    out
}

/// Compute the Steiner table for one bag: one Dreyfus-Wagner run with the
/// bag vertices as the terminal list, harvesting every subset optimum from
/// the table.
pub fn build_bag_table(g: &Graph, bag: &BTreeSet<VertexId>, l: usize) -> Result<TableMap> {
    if bag.len() > DW_TERMINAL_CAP {
        return Err(Error::CapExceeded(format!(
            "bag of {} vertices exceeds the Dreyfus-Wagner cap of {DW_TERMINAL_CAP}; \
             the decomposition is too wide for table construction",
            bag.len()
        )));
    }
    let vertices: Vec<VertexId> = bag.iter().copied().collect();
    let table = DwTable::build(g, &vertices)?;
    let mut entries = TableMap::new();
    for k in 2..=l.min(vertices.len()) {
        for subset in subsets_of_size(&vertices, k) {
            let set: BTreeSet<VertexId> = subset.iter().copied().collect();
            let mask = table.mask_of(&set).expect("subset of the terminal list");
            let entry = match table.tree_for(g, mask)? {
                Some(tree) => TableEntry::Tree(tree),
                None => TableEntry::Infeasible,
            };
            entries.insert(TerminalKey::from_set(&set), entry);
        }
    }
    Ok(entries)
}

/// Build the whole index. Tables are memoized per distinct bag vertex set,
/// so the result is independent of node order.
pub fn build_index(g: &Graph, ntd: &NiceTreeDecomposition, l: usize) -> Result<SteinerIndex> {
    assert!(l >= 2, "l must be at least 2");
    let roots = induced_roots(ntd)?;
    let mut memo: HashMap<Vec<VertexId>, Arc<TableMap>> = HashMap::new();
    let mut tables = Vec::with_capacity(ntd.td.node_count());
    for (node_id, bag) in ntd.td.bags.iter().enumerate() {
        let key: Vec<VertexId> = bag.iter().copied().collect();
        let entries = match memo.get(&key) {
            Some(t) => Arc::clone(t),
            None => {
                let t = Arc::new(build_bag_table(g, bag, l)?);
                memo.insert(key, Arc::clone(&t));
                t
            }
        };
        tables.push(BagTable { node_id, entries });
    }
    Ok(SteinerIndex {
        graph_hash: g.content_hash(),
        width: ntd.td.width(),
        height: ntd.td.height(),
        roots,
        l,
        tables,
        ntd: ntd.clone(),
    })
}

// ---------------------------------------------------------------------------
// Binary serialization. Little-endian fixed-width integers throughout.
// Layout: magic "STDX", version u16, graph hash (32 bytes), l u16,
// width u16, height u32, node count u32, vertex count u32; per node: bag,
// parent, kind; induced roots; per node: length-prefixed entry records.
// ---------------------------------------------------------------------------

pub const INDEX_MAGIC: &[u8; 4] = b"STDX";
pub const INDEX_VERSION: u16 = 1;

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, x: u8) {
        self.buf.push(x);
    }
    fn u16(&mut self, x: u16) {
        self.buf.extend_from_slice(&x.to_le_bytes());
    }
    fn u32(&mut self, x: u32) {
        self.buf.extend_from_slice(&x.to_le_bytes());
    }
    fn u64(&mut self, x: u64) {
        self.buf.extend_from_slice(&x.to_le_bytes());
    }
    fn i64(&mut self, x: i64) {
        self.buf.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::IndexFormat("truncated index file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn save_index(idx: &SteinerIndex) -> Vec<u8> {
    let mut w = Writer { buf: Vec::new() };
    w.buf.extend_from_slice(INDEX_MAGIC);
    w.u16(INDEX_VERSION);
    w.buf.extend_from_slice(&idx.graph_hash);
    w.u16(idx.l as u16);
    w.u16(idx.width as u16);
    w.u32(idx.height as u32);
    let nodes = idx.ntd.td.node_count();
    w.u32(nodes as u32);
    w.u32(idx.roots.root_of.len() as u32);
    for i in 0..nodes {
        let bag = &idx.ntd.td.bags[i];
        w.u16(bag.len() as u16);
        for v in bag {
            w.u32(v.0);
        }
        w.i64(idx.ntd.td.parent[i].map_or(-1, |p| p as i64));
        match idx.ntd.kinds[i] {
            NodeKind::Leaf => {
                w.u8(0);
                w.u32(0);
            }
            NodeKind::Introduce(v) => {
                w.u8(1);
                w.u32(v.0);
            }
            NodeKind::Forget(v) => {
                w.u8(2);
                w.u32(v.0);
            }
            NodeKind::Join => {
                w.u8(3);
                w.u32(0);
            }
        }
    }
    for &r in &idx.roots.root_of {
        w.u32(r as u32);
    }
    for table in &idx.tables {
        w.u32(table.entries.len() as u32);
        for (key, entry) in table.entries.iter() {
            w.u16(key.len() as u16);
            for v in key.vertices() {
                w.u32(v.0);
            }
            match entry {
                TableEntry::Infeasible => w.u8(0),
                TableEntry::Tree(t) => {
                    w.u8(1);
                    w.u64(t.weight().0);
                    w.u32(t.edges().len() as u32);
                    for &(a, b) in t.edges() {
                        w.u32(a.0);
                        w.u32(b.0);
                    }
                }
            }
        }
    }
    w.buf
}

pub fn load_index(bytes: &[u8], g: &Graph) -> Result<SteinerIndex> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != INDEX_MAGIC {
        return Err(Error::IndexFormat("bad magic".into()));
    }
    let version = r.u16()?;
    if version != INDEX_VERSION {
        return Err(Error::IndexFormat(format!(
            "unsupported index version {version} (expected {INDEX_VERSION})"
        )));
    }
    let hash: [u8; 32] = r.take(32)?.try_into().unwrap();
    let actual = g.content_hash();
    if hash != actual {
        return Err(Error::HashMismatch {
            expected: hex(&hash),
            actual: hex(&actual),
        });
    }
    let l = r.u16()? as usize;
    let width = r.u16()? as usize;
    let height = r.u32()? as usize;
    let nodes = r.u32()? as usize;
    let n_vertices = r.u32()? as usize;

    let mut bags = Vec::with_capacity(nodes);
    let mut parent = Vec::with_capacity(nodes);
    let mut kinds = Vec::with_capacity(nodes);
    for _ in 0..nodes {
        let blen = r.u16()? as usize;
        let mut bag = BTreeSet::new();
        for _ in 0..blen {
            bag.insert(VertexId(r.u32()?));
        }
        bags.push(bag);
        let p = r.i64()?;
        parent.push(if p < 0 {
            None
        } else {
            let p = p as usize;
            if p >= nodes {
                return Err(Error::IndexFormat(format!("parent {p} out of range")));
            }
            Some(p)
        });
        let kind = r.u8()?;
        let v = VertexId(r.u32()?);
        kinds.push(match kind {
            0 => NodeKind::Leaf,
            1 => NodeKind::Introduce(v),
            2 => NodeKind::Forget(v),
            3 => NodeKind::Join,
            other => return Err(Error::IndexFormat(format!("unknown node kind {other}"))),
        });
    }
    let mut children = vec![Vec::new(); nodes];
    let mut root = None;
    for (c, p) in parent.iter().enumerate() {
        match *p {
            Some(p) => children[p].push(c),
            None => {
                if root.replace(c).is_some() {
                    return Err(Error::IndexFormat("multiple roots".into()));
                }
            }
        }
    }
    let root = root.ok_or_else(|| Error::IndexFormat("no root node".into()))?;
    let mut root_of = Vec::with_capacity(n_vertices);
    for _ in 0..n_vertices {
        let node = r.u32()? as usize;
        if node >= nodes {
            return Err(Error::IndexFormat(format!("induced root {node} out of range")));
        }
        root_of.push(node);
    }
    let mut tables = Vec::with_capacity(nodes);
    for node_id in 0..nodes {
        let count = r.u32()? as usize;
        let mut entries = TableMap::new();
        for _ in 0..count {
            let klen = r.u16()? as usize;
            let mut set = BTreeSet::new();
            for _ in 0..klen {
                set.insert(VertexId(r.u32()?));
            }
            let key = TerminalKey::from_set(&set);
            let entry = match r.u8()? {
                0 => TableEntry::Infeasible,
                1 => {
                    let weight = Weight(r.u64()?);
                    let ecount = r.u32()? as usize;
                    let mut edges: BTreeSet<EdgeKey> = BTreeSet::new();
                    for _ in 0..ecount {
                        let a = VertexId(r.u32()?);
                        let b = VertexId(r.u32()?);
                        edges.insert(edge_key(a, b));
                    }
                    let tree = SteinerTree::from_edges(g, set, edges)?;
                    if tree.weight() != weight {
                        return Err(Error::IndexFormat(
                            "stored weight disagrees with graph".into(),
                        ));
                    }
                    TableEntry::Tree(tree)
                }
                other => return Err(Error::IndexFormat(format!("unknown entry tag {other}"))),
            };
            entries.insert(key, entry);
        }
        tables.push(BagTable {
            node_id,
            entries: Arc::new(entries),
        });
    }
    if r.pos != bytes.len() {
        return Err(Error::IndexFormat("trailing bytes after index".into()));
    }
    use crate::decomp::TreeDecomposition;
    Ok(SteinerIndex {
        graph_hash: hash,
        ntd: NiceTreeDecomposition {
            td: TreeDecomposition {
                bags,
                parent,
                children,
                root,
            },
            kinds,
        },
        roots: InducedRootMap { root_of },
        l,
        width,
        height,
        tables,
    })
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Debug emitter: same content as the binary file, as JSON.
pub fn dump_json(idx: &SteinerIndex) -> serde_json::Value {
    use serde_json::json;
    let nodes: Vec<_> = (0..idx.ntd.td.node_count())
        .map(|i| {
            let kind = match idx.ntd.kinds[i] {
                NodeKind::Leaf => json!({"kind": "leaf"}),
                NodeKind::Join => json!({"kind": "join"}),
                NodeKind::Introduce(v) => json!({"kind": "introduce", "vertex": v.0}),
                NodeKind::Forget(v) => json!({"kind": "forget", "vertex": v.0}),
            };
            let entries: Vec<_> = idx.tables[i]
                .entries
                .iter()
                .map(|(key, entry)| {
                    let key: Vec<u32> = key.vertices().iter().map(|v| v.0).collect();
                    match entry {
                        TableEntry::Infeasible => json!({"key": key, "infeasible": true}),
                        TableEntry::Tree(t) => json!({
                            "key": key,
                            "weight": t.weight().0,
                            "edges": t.edges().iter().map(|&(a, b)| vec![a.0, b.0]).collect::<Vec<_>>(),
                        }),
                    }
                })
                .collect();
            json!({
                "node": i,
                "bag": idx.ntd.td.bags[i].iter().map(|v| v.0).collect::<Vec<_>>(),
                "parent": idx.ntd.td.parent[i],
                "kind": kind,
                "entries": entries,
            })
        })
        .collect();
    json!({
        "magic": "STDX",
        "version": INDEX_VERSION,
        "graph_hash": hex(&idx.graph_hash),
        "l": idx.l,
        "width": idx.width,
        "height": idx.height,
        "entry_count": idx.entry_count(),
        "nodes": nodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomp::{decompose, to_nice, Heuristic};
    use crate::gen::{random_connected_graph, random_terminals, GenParams};
    use crate::graph::shortest_path;
    use crate::oracle::brute_force_steiner;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vid(i: u32) -> VertexId {
        VertexId(i)
    }

    fn graph(n: usize, edges: &[(u32, u32, u64)]) -> Graph {
        Graph::new(n, edges.to_vec(), 1, (1..=n as u32).collect()).unwrap()
    }

    #[test]
    fn pair_bag_is_shortest_path() {
        let g = graph(3, &[(0, 1, 2), (1, 2, 3)]);
        let bag: BTreeSet<VertexId> = [vid(0), vid(2)].into_iter().collect();
        let table = build_bag_table(&g, &bag, 4).unwrap();
        assert_eq!(table.len(), 1);
        let key = TerminalKey::from_set(&bag);
        let tree = table[&key].as_tree().unwrap();
        assert_eq!(tree.weight(), shortest_path(&g, vid(0), vid(2)).unwrap().weight());
    }

    #[test]
    fn bag_of_three_l_two_has_three_entries() {
        let g = graph(3, &[(0, 1, 1), (1, 2, 1), (0, 2, 1)]);
        let bag: BTreeSet<VertexId> = g.vertices().collect();
        let table = build_bag_table(&g, &bag, 2).unwrap();
        assert_eq!(table.len(), 3);
    }

    #[test]
    fn entries_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for i in 0..25 {
            let g = random_connected_graph(
                &mut rng,
                &GenParams {
                    n: 5 + (i % 7),
                    extra_edges: i % 5,
                    max_weight: 9,
                },
            );
            let nice = to_nice(&decompose(&g, Heuristic::MinDegree));
            let idx = build_index(&g, &nice, 3).unwrap();
            for table in &idx.tables {
                for (key, entry) in table.entries.iter() {
                    let tree = entry.as_tree().expect("connected graph");
                    let oracle = brute_force_steiner(&g, &key.to_set()).unwrap();
                    assert_eq!(tree.weight(), oracle.weight(), "key {key:?}");
                    tree.validate(&g).unwrap();
                }
            }
        }
    }

    #[test]
    fn single_edge_index() {
        let g = graph(2, &[(0, 1, 4)]);
        let nice = to_nice(&decompose(&g, Heuristic::MinDegree));
        let idx = build_index(&g, &nice, 2).unwrap();
        assert_eq!(idx.entry_count(), idx.entry_count_bound());
        assert!(idx.entry_count() >= 1);
    }

    #[test]
    fn entry_count_matches_bound_when_connected() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for i in 0..15 {
            let g = random_connected_graph(
                &mut rng,
                &GenParams {
                    n: 6 + (i % 8),
                    extra_edges: i % 4,
                    max_weight: 6,
                },
            );
            let nice = to_nice(&decompose(&g, Heuristic::MinDegree));
            let idx = build_index(&g, &nice, 4).unwrap();
            assert_eq!(idx.entry_count(), idx.entry_count_bound());
            // no infeasible entries on a connected graph
            for table in &idx.tables {
                assert!(table.entries.values().all(|e| e.as_tree().is_some()));
            }
        }
    }

    #[test]
    fn join_children_share_tables() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let g = random_connected_graph(
            &mut rng,
            &GenParams {
                n: 10,
                extra_edges: 6,
                max_weight: 5,
            },
        );
        let nice = to_nice(&decompose(&g, Heuristic::MinDegree));
        let idx = build_index(&g, &nice, 3).unwrap();
        for (i, kind) in nice.kinds.iter().enumerate() {
            if matches!(kind, NodeKind::Join) {
                let kids = &nice.td.children[i];
                assert_eq!(idx.tables[kids[0]].entries, idx.tables[kids[1]].entries);
            }
        }
    }

    #[test]
    fn rebuild_is_byte_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let g = random_connected_graph(
            &mut rng,
            &GenParams {
                n: 12,
                extra_edges: 7,
                max_weight: 10,
            },
        );
        let nice = to_nice(&decompose(&g, Heuristic::MinDegree));
        let a = save_index(&build_index(&g, &nice, 4).unwrap());
        let b = save_index(&build_index(&g, &nice, 4).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn round_trip_and_corruption() {
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        let g = random_connected_graph(
            &mut rng,
            &GenParams {
                n: 9,
                extra_edges: 4,
                max_weight: 8,
            },
        );
        let nice = to_nice(&decompose(&g, Heuristic::MinDegree));
        let idx = build_index(&g, &nice, 3).unwrap();
        let bytes = save_index(&idx);
        let loaded = load_index(&bytes, &g).unwrap();
        assert_eq!(loaded, idx);
        assert_eq!(save_index(&loaded), bytes);

        // truncation is a clean error
        assert!(matches!(
            load_index(&bytes[..bytes.len() - 3], &g),
            Err(Error::IndexFormat(_))
        ));
        // corrupted magic
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(load_index(&bad, &g), Err(Error::IndexFormat(_))));

        // hash mismatch against an edited graph names both hashes
        let g2 = g.scaled_weights(2).unwrap();
        match load_index(&bytes, &g2) {
            Err(Error::HashMismatch { expected, actual }) => {
                assert_eq!(expected, hex(&idx.graph_hash));
                assert_eq!(actual, hex(&g2.content_hash()));
            }
            other => panic!("expected hash mismatch, got {other:?}"),
        }
    }

    #[test]
    fn refuses_overwide_bags() {
        // star with 17 leaves: eliminating the center yields a huge bag only
        // if leaves are eliminated... min-degree removes leaves first, so
        // build an explicit wide bag instead.
        let edges: Vec<(u32, u32, u64)> = (1..18).map(|i| (0, i, 1)).collect();
        let g = graph(18, &edges);
        let bag: BTreeSet<VertexId> = g.vertices().collect();
        assert!(matches!(
            build_bag_table(&g, &bag, 2),
            Err(Error::CapExceeded(_))
        ));
    }
}
