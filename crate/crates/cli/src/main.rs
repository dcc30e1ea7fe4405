//! Command-line front end: decompose, index, query, verify, bench,
//! oracle, gen. Exit codes: 0 success, 1 verification mismatch,
//! 2 usage or input error.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use steiner_core::decomp::{
    decompose, to_nice, validate_decomposition, write_td, Heuristic, NiceTreeDecomposition,
};
use steiner_core::gen::{
    grid_graph, random_connected_graph, random_terminals, write_stp, Family, GenParams,
};
use steiner_core::graph::{Graph, VertexId, Weight};
use steiner_core::index::{build_index, dump_json, load_index, save_index};
use steiner_core::oracle::{brute_force_steiner, dreyfus_wagner, BRUTE_FORCE_VERTEX_CAP};
use steiner_core::parse::load_graph;
use steiner_core::query::query;
use steiner_core::{Error, SteinerTree};

#[derive(Parser)]
#[command(name = "steiner", about = "Exact Steiner-tree queries via a tree-decomposition index")]
struct Cli {
    /// RNG seed for anything randomized (verify, bench, gen)
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Worker threads for bench (0 = all cores)
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Suppress informational output
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum HeuristicArg {
    MinDegree,
    MinFill,
}

impl From<HeuristicArg> for Heuristic {
    fn from(h: HeuristicArg) -> Heuristic {
        match h {
            HeuristicArg::MinDegree => Heuristic::MinDegree,
            HeuristicArg::MinFill => Heuristic::MinFill,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleEngine {
    Dw,
    Brute,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    RandomSparse,
    Grid,
    TreePlusChords,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Family {
        match f {
            FamilyArg::RandomSparse => Family::RandomSparse,
            FamilyArg::Grid => Family::Grid,
            FamilyArg::TreePlusChords => Family::TreePlusChords,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Build and validate a (nice) tree decomposition, write it as .td text
    Decompose {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, value_enum, default_value_t = HeuristicArg::MinFill)]
        heuristic: HeuristicArg,
        /// Output .td path; stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Precompute per-bag Steiner trees and write the binary index
    Index {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = HeuristicArg::MinFill)]
        heuristic: HeuristicArg,
        /// Largest precomputed terminal-set size per bag
        #[arg(long, default_value_t = 5)]
        l: usize,
        /// Also print the index contents as JSON on stdout
        #[arg(long)]
        dump_json: bool,
    },
    /// Answer one terminal-set query from an index
    Query {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        /// Comma-separated 1-based vertex labels
        #[arg(long)]
        terminals: String,
        /// Oracle to fall back to when the query exceeds the index capacity
        #[arg(long, value_name = "ENGINE")]
        fallback: Option<String>,
        /// Re-solve with the dynamic-programming oracle and compare
        #[arg(long)]
        verify: bool,
        /// Print traversal statistics as one JSON line
        #[arg(long)]
        stats: bool,
    },
    /// Run engine vs oracle(s) on a seeded corpus; exit 1 on any mismatch
    Verify {
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[arg(long, default_value_t = 14)]
        max_n: usize,
        #[arg(long, default_value_t = 5)]
        l: usize,
    },
    /// Measure index build and query cost over a seeded corpus, emit CSV
    Bench {
        #[arg(long, default_value_t = 30)]
        count: usize,
        #[arg(long, default_value_t = 20)]
        max_n: usize,
        #[arg(long, default_value_t = 5)]
        l: usize,
        /// CSV output path; stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve one instance exactly without an index
    Oracle {
        #[arg(long)]
        graph: PathBuf,
        /// Comma-separated 1-based labels; defaults to the file's terminal section
        #[arg(long)]
        terminals: Option<String>,
        #[arg(long, value_enum, default_value_t = OracleEngine::Dw)]
        engine: OracleEngine,
    },
    /// Generate seeded benchmark instances as .stp files
    Gen {
        #[arg(long, value_enum, default_value_t = FamilyArg::RandomSparse)]
        family: FamilyArg,
        #[arg(long, default_value_t = 12)]
        n: usize,
        #[arg(long, default_value_t = 5)]
        count: usize,
        #[arg(long, default_value_t = 4)]
        extra_edges: usize,
        #[arg(long, default_value_t = 10)]
        max_weight: u64,
        #[arg(long, default_value_t = 3)]
        terminals: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

/// Usage and input problems exit 2; everything else that errors is an
/// internal failure and also exits 2 (only verification mismatches use 1,
/// and those return Ok(1) paths, not Err).
fn exit_code_for(_e: &Error) -> u8 {
    2
}

fn parse_terminal_list(g: &Graph, list: &str) -> Result<BTreeSet<VertexId>, Error> {
    let mut out = BTreeSet::new();
    for part in list.split(',') {
        let part = part.trim();
        let label: u32 = part
            .parse()
            .map_err(|_| Error::InvalidQuery(format!("bad terminal '{part}'")))?;
        let v = g
            .vertex_by_label(label)
            .ok_or(Error::UnknownVertex(label))?;
        out.insert(v);
    }
    Ok(out)
}

/// Display a scaled integer weight in original units, exactly.
fn show_weight(w: Weight, scale: u64) -> String {
    if scale == 1 || w.0 % scale == 0 {
        format!("{}", w.0 / scale)
    } else {
        format!("{}/{}", w.0, scale)
    }
}

fn show_edges(g: &Graph, t: &SteinerTree) -> String {
    t.edges()
        .iter()
        .map(|&(u, v)| format!("({},{})", g.label(u), g.label(v)))
        .collect::<Vec<_>>()
        .join(" ")
}

fn build_nice(g: &Graph, h: Heuristic) -> Result<NiceTreeDecomposition, Error> {
    let td = decompose(g, h);
    let violations = validate_decomposition(g, &td);
    if !violations.is_empty() {
        return Err(Error::InvalidDecomposition(format!("{violations:?}")));
    }
    let nice = to_nice(&td);
    nice.validate_kinds()?;
    Ok(nice)
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.cmd {
        Cmd::Decompose { graph, heuristic, out } => {
            let (g, _) = load_graph(&graph)?;
            let nice = build_nice(&g, heuristic.into())?;
            let text = write_td(&nice.td, Some(&nice.kinds));
            match out {
                Some(p) => std::fs::write(p, &text)?,
                None => print!("{text}"),
            }
            if !cli.quiet {
                eprintln!(
                    "decomposed: width={} height={} nodes={}",
                    nice.td.width(),
                    nice.td.height(),
                    nice.td.node_count()
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Index { graph, out, heuristic, l, dump_json: dump } => {
            if l < 2 {
                return Err(Error::InvalidQuery("l must be at least 2".into()));
            }
            let (g, _) = load_graph(&graph)?;
            let nice = build_nice(&g, heuristic.into())?;
            let start = Instant::now();
            let idx = build_index(&g, &nice, l)?;
            let bytes = save_index(&idx);
            std::fs::write(&out, &bytes)?;
            if dump {
                println!("{}", dump_json(&idx));
            }
            if !cli.quiet {
                eprintln!(
                    "indexed: entries={} bytes={} width={} height={} l={} build_ms={:.1}",
                    idx.entry_count(),
                    bytes.len(),
                    idx.width,
                    idx.height,
                    idx.l,
                    start.elapsed().as_secs_f64() * 1e3
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Query { index, graph, terminals, fallback, verify, stats } => {
            let (g, _) = load_graph(&graph)?;
            let bytes = std::fs::read(&index)?;
            let idx = load_index(&bytes, &g)?;
            let s = parse_terminal_list(&g, &terminals)?;
            let fallback_dw = match fallback.as_deref() {
                None => false,
                Some("dw") => true,
                Some(other) => {
                    return Err(Error::InvalidQuery(format!(
                        "unknown fallback engine '{other}'; only 'dw' is available"
                    )))
                }
            };
            let (tree, stats_json) = match query(&idx, &g, &s) {
                Ok(res) => {
                    let j = serde_json::json!({
                        "engine": "index",
                        "height": res.stats.height,
                        "width": res.stats.width,
                        "terminals": s.len(),
                        "nodes_visited": res.stats.nodes_visited,
                        "stvs_calls": res.stats.stvs_calls,
                        "query_ms": res.stats.wall_ms,
                        "scale": g.scale(),
                    });
                    (res.tree, j)
                }
                Err(Error::Capacity { got, cap }) if fallback_dw => {
                    let start = Instant::now();
                    let (tree, _) = dreyfus_wagner(&g, &s)?;
                    let j = serde_json::json!({
                        "engine": "dw-fallback",
                        "terminals": got,
                        "index_cap": cap,
                        "query_ms": start.elapsed().as_secs_f64() * 1e3,
                        "scale": g.scale(),
                    });
                    (tree, j)
                }
                Err(e) => return Err(e),
            };
            if verify {
                let (oracle_tree, _) =
                    dreyfus_wagner(&g, &s)?;
                if oracle_tree.weight() != tree.weight() {
                    eprintln!(
                        "MISMATCH: engine {} vs oracle {}",
                        show_weight(tree.weight(), g.scale()),
                        show_weight(oracle_tree.weight(), g.scale())
                    );
                    return Ok(ExitCode::from(1));
                }
            }
            println!(
                "weight={} edges=[{}]",
                show_weight(tree.weight(), g.scale()),
                show_edges(&g, &tree)
            );
            if stats {
                println!("{stats_json}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Verify { count, max_n, l } => {
            if max_n < 2 || l < 2 {
                return Err(Error::InvalidQuery("need max-n >= 2 and l >= 2".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
            let mut mismatches = 0usize;
            for i in 0..count {
                let n = 2 + i % (max_n - 1);
                let g = random_connected_graph(
                    &mut rng,
                    &GenParams { n, extra_edges: i % (n + 1), max_weight: 10 },
                );
                let nice = build_nice(&g, Heuristic::MinFill)?;
                let idx = build_index(&g, &nice, l)?;
                let k = (2 + i % (l - 1)).min(n);
                if k < 2 {
                    continue;
                }
                let s = random_terminals(&mut rng, &g, k);
                let engine = query(&idx, &g, &s)?.tree.weight();
                let (dw_tree, _) = dreyfus_wagner(&g, &s)?;
                let mut ok = engine == dw_tree.weight();
                if n <= BRUTE_FORCE_VERTEX_CAP {
                    let brute = brute_force_steiner(&g, &s)?;
                    ok &= brute.weight() == engine;
                }
                if !ok {
                    mismatches += 1;
                    eprintln!("mismatch on instance {i} (n={n}, terminals={s:?})");
                }
            }
            if !cli.quiet {
                eprintln!("verify: {count} instances, {mismatches} mismatches, seed={}", cli.seed);
            }
            Ok(if mismatches == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Cmd::Bench { count, max_n, l, out } => {
            if max_n < 3 || l < 2 {
                return Err(Error::InvalidQuery("need max-n >= 3 and l >= 2".into()));
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(cli.jobs)
                .build()
                .map_err(|e| Error::Internal(e.to_string()))?;
            // instances fixed up front so row content is independent of scheduling
            let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
            let jobs: Vec<(usize, Graph, BTreeSet<VertexId>)> = (0..count)
                .map(|i| {
                    let n = 3 + i % (max_n - 2);
                    let g = random_connected_graph(
                        &mut rng,
                        &GenParams { n, extra_edges: i % (n + 1), max_weight: 10 },
                    );
                    let k = (2 + i % (l - 1)).min(n);
                    let s = random_terminals(&mut rng, &g, k);
                    (i, g, s)
                })
                .collect();
            let mut rows: Vec<(usize, String)> = pool.install(|| {
                jobs.par_iter()
                    .map(|(i, g, s)| {
                        let nice = build_nice(g, Heuristic::MinFill)?;
                        let t0 = Instant::now();
                        let idx = build_index(g, &nice, l)?;
                        let build_ms = t0.elapsed().as_secs_f64() * 1e3;
                        let bytes = save_index(&idx).len();
                        let res = query(&idx, g, s)?;
                        let t1 = Instant::now();
                        let (oracle_tree, _) = dreyfus_wagner(g, s)?;
                        let oracle_ms = t1.elapsed().as_secs_f64() * 1e3;
                        Ok((
                            *i,
                            format!(
                                "{},{},{},{},{},{},{:.3},{},{:.3},{},{:.3},{},{}",
                                i,
                                g.vertex_count(),
                                g.edge_count(),
                                idx.width,
                                idx.height,
                                s.len(),
                                build_ms,
                                bytes,
                                res.stats.wall_ms,
                                res.stats.stvs_calls,
                                oracle_ms,
                                res.tree.weight().0,
                                oracle_tree.weight().0
                            ),
                        ))
                    })
                    .collect::<Result<Vec<_>, Error>>()
            })?;
            rows.sort_by_key(|(i, _)| *i);
            let mut csv = String::from(
                "instance,vertices,edges,width,height,terminals,index_build_ms,index_bytes,\
                 query_ms,stvs_calls,oracle_ms,engine_weight,oracle_weight\n",
            );
            for (_, row) in &rows {
                csv.push_str(row);
                csv.push('\n');
            }
            match out {
                Some(p) => std::fs::write(p, &csv)?,
                None => print!("{csv}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Oracle { graph, terminals, engine } => {
            let (g, file_terms) = load_graph(&graph)?;
            let s: BTreeSet<VertexId> = match terminals {
                Some(list) => parse_terminal_list(&g, &list)?,
                None => file_terms.into_iter().collect(),
            };
            if s.len() < 2 {
                return Err(Error::InvalidQuery(
                    "need at least 2 terminals (pass --terminals or use a file with a terminal section)"
                        .into(),
                ));
            }
            let tree = match engine {
                OracleEngine::Dw => dreyfus_wagner(&g, &s)?.0,
                OracleEngine::Brute => brute_force_steiner(&g, &s)?,
            };
            println!(
                "weight={} edges=[{}]",
                show_weight(tree.weight(), g.scale()),
                show_edges(&g, &tree)
            );
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Gen { family, n, count, extra_edges, max_weight, terminals, out_dir } => {
            std::fs::create_dir_all(&out_dir)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
            for i in 0..count {
                let g = match Family::from(family) {
                    Family::Grid => {
                        let side = (n as f64).sqrt().round().max(2.0) as usize;
                        grid_graph(&mut rng, side, side, max_weight)
                    }
                    Family::RandomSparse | Family::TreePlusChords => random_connected_graph(
                        &mut rng,
                        &GenParams { n, extra_edges, max_weight },
                    ),
                };
                let t = random_terminals(&mut rng, &g, terminals.min(g.vertex_count()));
                let path = out_dir.join(format!("instance_{:04}.stp", i));
                std::fs::write(&path, write_stp(&g, &t))?;
            }
            if !cli.quiet {
                eprintln!("generated {count} instances in {} (seed={})", out_dir.display(), cli.seed);
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
