//! Seeded instance generation: connected random graphs, grids, and trees
//! with extra chords. Deterministic for a fixed seed.

use rand::Rng;
use std::collections::BTreeSet;

use crate::graph::{Graph, VertexId};

#[derive(Debug, Clone)]
pub struct GenParams {
    pub n: usize,
    pub extra_edges: usize,
    pub max_weight: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    RandomSparse,
    Grid,
    TreePlusChords,
}

impl std::str::FromStr for Family {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "random-sparse" => Ok(Family::RandomSparse),
            "grid" => Ok(Family::Grid),
            "tree-plus-chords" => Ok(Family::TreePlusChords),
            other => Err(format!(
                "unknown family '{other}'; use random-sparse, grid, or tree-plus-chords"
            )),
        }
    }
}

/// Random spanning tree plus `extra_edges` random chords; always connected.
pub fn random_connected_graph<R: Rng>(rng: &mut R, p: &GenParams) -> Graph {
    assert!(p.n >= 1);
    let mut edges: Vec<(u32, u32, u64)> = Vec::new();
    let mut seen: BTreeSet<(u32, u32)> = BTreeSet::new();
    for v in 1..p.n as u32 {
        let u = rng.gen_range(0..v);
        edges.push((u, v, rng.gen_range(1..=p.max_weight)));
        seen.insert((u, v));
    }
    let mut added = 0;
    let mut attempts = 0;
    while added < p.extra_edges && attempts < 20 * (p.extra_edges + 1) {
        attempts += 1;
        let a = rng.gen_range(0..p.n as u32);
        let b = rng.gen_range(0..p.n as u32);
        if a == b {
            continue;
        }
        let key = (a.min(b), a.max(b));
        if seen.insert(key) {
            edges.push((key.0, key.1, rng.gen_range(1..=p.max_weight)));
            added += 1;
        }
    }
    Graph::new(p.n, edges, 1, (1..=p.n as u32).collect()).unwrap()
}

/// r x c grid with random weights.
pub fn grid_graph<R: Rng>(rng: &mut R, rows: usize, cols: usize, max_weight: u64) -> Graph {
    let n = rows * cols;
    let mut edges = Vec::new();
    for r in 0..rows as u32 {
        for c in 0..cols as u32 {
            let v = r * cols as u32 + c;
            if (c as usize) + 1 < cols {
                edges.push((v, v + 1, rng.gen_range(1..=max_weight)));
            }
            if (r as usize) + 1 < rows {
                edges.push((v, v + cols as u32, rng.gen_range(1..=max_weight)));
            }
        }
    }
    Graph::new(n, edges, 1, (1..=n as u32).collect()).unwrap()
}

/// Uniform random tree (random attachment) plus `chords` extra edges.
pub fn tree_plus_chords<R: Rng>(rng: &mut R, n: usize, chords: usize, max_weight: u64) -> Graph {
    random_connected_graph(
        rng,
        &GenParams {
            n,
            extra_edges: chords,
            max_weight,
        },
    )
}

/// Sample a distinct terminal set of the requested size.
pub fn random_terminals<R: Rng>(rng: &mut R, g: &Graph, k: usize) -> BTreeSet<VertexId> {
    assert!(k <= g.vertex_count());
    let mut t = BTreeSet::new();
    while t.len() < k {
        t.insert(VertexId(rng.gen_range(0..g.vertex_count() as u32)));
    }
    t
}

/// Render a graph (and optional terminal set) as SteinLib STP text.
pub fn write_stp(g: &Graph, terminals: &BTreeSet<VertexId>) -> String {
    let mut out = String::new();
    out.push_str("SECTION Graph\n");
    out.push_str(&format!("Nodes {}\n", g.vertex_count()));
    out.push_str(&format!("Edges {}\n", g.edge_count()));
    for e in g.edges() {
        out.push_str(&format!("E {} {} {}\n", e.u.0 + 1, e.v.0 + 1, e.w.0));
    }
    out.push_str("END\n");
    if !terminals.is_empty() {
        out.push_str("SECTION Terminals\n");
        out.push_str(&format!("Terminals {}\n", terminals.len()));
        for t in terminals {
            out.push_str(&format!("T {}\n", t.0 + 1));
        }
        out.push_str("END\n");
    }
    out.push_str("EOF\n");
    out
}
