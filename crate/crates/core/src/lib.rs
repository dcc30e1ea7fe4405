//! Exact Steiner-tree queries over weighted undirected graphs, answered
//! from a precomputed tree-decomposition index.
//!
//! Pipeline: parse a graph ([`parse`]), build a nice tree decomposition
//! ([`decomp`]), precompute per-bag optimum trees into an index
//! ([`index`]), then answer terminal-set queries by a localized bottom-up
//! traversal ([`query`]). [`oracle`] holds the standalone exact solvers
//! used both as a query fallback and as ground truth in tests; [`gen`]
//! produces seeded benchmark instances.

pub mod decomp;
pub mod error;
pub mod gen;
pub mod graph;
pub mod index;
pub mod oracle;
pub mod parse;
pub mod query;

pub use error::{Error, Result};
pub use graph::{Graph, SteinerTree, VertexId, Weight};
pub use index::{build_index, load_index, save_index, SteinerIndex};
pub use query::{query, QueryResult, QueryStats};
