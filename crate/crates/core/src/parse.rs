//! Instance ingestion: SteinLib STP text and a plain edge-list format.
//!
//! Rational edge weights are stored as scaled integers: every weight is read
//! as a reduced fraction and the whole graph is multiplied by the least
//! common multiple of the denominators.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{Graph, VertexId};

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: u64, b: u64) -> u64 {
    a / gcd(a, b) * b
}

/// Parse a weight token as a reduced fraction (numerator, denominator).
/// Accepts plain integers and decimal notation like `1.5`.
fn parse_fraction(tok: &str, line: usize) -> Result<(u64, u64)> {
    let bad = || Error::Parse {
        line,
        msg: format!("invalid weight '{tok}'"),
    };
    let (num, den) = if let Some((int, frac)) = tok.split_once('.') {
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let int: u64 = if int.is_empty() {
            0
        } else {
            int.parse().map_err(|_| bad())?
        };
        let den = 10u64
            .checked_pow(frac.len() as u32)
            .ok_or_else(bad)?;
        let frac: u64 = frac.parse().map_err(|_| bad())?;
        let num = int.checked_mul(den).and_then(|x| x.checked_add(frac)).ok_or_else(bad)?;
        (num, den)
    } else {
        (tok.parse().map_err(|_| bad())?, 1)
    };
    if num == 0 {
        return Err(Error::Parse {
            line,
            msg: "non-positive edge weight".into(),
        });
    }
    let g = gcd(num, den);
    Ok((num / g, den / g))
}

fn scale_weights(fracs: &[(u64, u64)]) -> Result<(u64, Vec<u64>)> {
    let mut scale = 1u64;
    for &(_, den) in fracs {
        scale = lcm(scale, den);
    }
    let mut out = Vec::with_capacity(fracs.len());
    for &(num, den) in fracs {
        out.push(num.checked_mul(scale / den).ok_or(Error::Overflow)?);
    }
    Ok((scale, out))
}

/// Parse SteinLib STP text. Returns the graph and the terminal list in file
/// order, mapped to dense vertex ids. Node numbering in the file is 1-based.
pub fn parse_stp(text: &str) -> Result<(Graph, Vec<VertexId>)> {
    let mut nodes: Option<usize> = None;
    let mut declared_edges: Option<usize> = None;
    let mut raw_edges: Vec<(u32, u32)> = Vec::new();
    let mut fracs: Vec<(u64, u64)> = Vec::new();
    let mut edge_lines: Vec<usize> = Vec::new();
    let mut terminals: Vec<u32> = Vec::new();
    let mut section = String::new();

    for (i, raw_line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw_line.trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        let kw = toks[0].to_ascii_lowercase();
        match kw.as_str() {
            "section" => {
                section = toks
                    .get(1)
                    .ok_or_else(|| Error::Parse {
                        line: lineno,
                        msg: "SECTION without a name".into(),
                    })?
                    .to_ascii_lowercase();
            }
            "end" => section.clear(),
            "eof" => break,
            "nodes" if section == "graph" => {
                nodes = Some(parse_usize(toks.get(1), lineno, "Nodes")?);
            }
            "edges" if section == "graph" => {
                declared_edges = Some(parse_usize(toks.get(1), lineno, "Edges")?);
            }
            "e" | "a" if section == "graph" => {
                if toks.len() != 4 {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: "edge line must be 'E <u> <v> <w>'".into(),
                    });
                }
                let u = parse_usize(toks.get(1), lineno, "edge endpoint")?;
                let v = parse_usize(toks.get(2), lineno, "edge endpoint")?;
                raw_edges.push((u as u32, v as u32));
                fracs.push(parse_fraction(toks[3], lineno)?);
                edge_lines.push(lineno);
            }
            "terminals" if section == "terminals" => {}
            "t" if section == "terminals" => {
                terminals.push(parse_usize(toks.get(1), lineno, "terminal")? as u32);
            }
            // header magic, comment section contents, unknown keys: skipped
            _ => {}
        }
    }

    let n = nodes.ok_or_else(|| Error::Parse {
        line: 0,
        msg: "missing 'Nodes' declaration".into(),
    })?;
    if let Some(m) = declared_edges {
        if m != raw_edges.len() {
            return Err(Error::Parse {
                line: 0,
                msg: format!("declared {m} edges but found {}", raw_edges.len()),
            });
        }
    }
    let (scale, weights) = scale_weights(&fracs)?;
    let mut edges = Vec::with_capacity(raw_edges.len());
    for (((u, v), w), &line) in raw_edges.iter().zip(weights).zip(&edge_lines) {
        for &&x in [u, v].iter() {
            if x == 0 || x as usize > n {
                return Err(Error::Parse {
                    line,
                    msg: format!("node index {x} out of range 1..={n}"),
                });
            }
        }
        edges.push((u - 1, v - 1, w));
    }
    let labels: Vec<u32> = (1..=n as u32).collect();
    let g = Graph::new(n, edges, scale, labels)?;
    let mut term_ids = Vec::with_capacity(terminals.len());
    for t in terminals {
        if t == 0 || t as usize > n {
            return Err(Error::Parse {
                line: 0,
                msg: format!("terminal {t} out of range 1..={n}"),
            });
        }
        term_ids.push(VertexId(t - 1));
    }
    Ok((g, term_ids))
}

fn parse_usize(tok: Option<&&str>, line: usize, what: &str) -> Result<usize> {
    tok.and_then(|t| t.parse().ok()).ok_or_else(|| Error::Parse {
        line,
        msg: format!("invalid {what}"),
    })
}

/// Plain edge list: one `u v w` per line, `#` comments. Vertex labels are
/// arbitrary non-negative integers and are densely renumbered.
pub fn parse_edge_list(text: &str) -> Result<Graph> {
    let mut raw: Vec<(u32, u32)> = Vec::new();
    let mut fracs: Vec<(u64, u64)> = Vec::new();
    for (i, raw_line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = match raw_line.split_once('#') {
            Some((before, _)) => before.trim(),
            None => raw_line.trim(),
        };
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(Error::Parse {
                line: lineno,
                msg: "expected 'u v w'".into(),
            });
        }
        let u: u32 = toks[0].parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("invalid vertex '{}'", toks[0]),
        })?;
        let v: u32 = toks[1].parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("invalid vertex '{}'", toks[1]),
        })?;
        raw.push((u, v));
        fracs.push(parse_fraction(toks[2], lineno)?);
    }
    let mut label_map: BTreeMap<u32, u32> = BTreeMap::new();
    for &(u, v) in &raw {
        label_map.entry(u).or_insert(0);
        label_map.entry(v).or_insert(0);
    }
    let labels: Vec<u32> = label_map.keys().copied().collect();
    for (i, (_, slot)) in label_map.iter_mut().enumerate() {
        *slot = i as u32;
    }
    let (scale, weights) = scale_weights(&fracs)?;
    let edges: Vec<(u32, u32, u64)> = raw
        .into_iter()
        .zip(weights)
        .map(|((u, v), w)| (label_map[&u], label_map[&v], w))
        .collect();
    Graph::new(labels.len(), edges, scale, labels)
}

/// Load a graph by file extension: `.stp` (with terminals) or `.edges`.
pub fn load_graph(path: &Path) -> Result<(Graph, Vec<VertexId>)> {
    let text = std::fs::read_to_string(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("stp") => parse_stp(&text),
        Some("edges") => Ok((parse_edge_list(&text)?, Vec::new())),
        _ => Err(Error::Parse {
            line: 0,
            msg: format!(
                "unrecognized extension for '{}'; expected .stp or .edges",
                path.display()
            ),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Weight;

    #[test]
    fn parses_minimal_stp() {
        let text = "SECTION Graph\nNodes 3\nEdges 2\nE 1 2 1\nE 2 3 1\nEND\n\
                    SECTION Terminals\nTerminals 2\nT 1\nT 3\nEND\nEOF\n";
        let (g, terms) = parse_stp(text).unwrap();
        assert_eq!(g.vertex_count(), 3);
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.edge_weight(VertexId(0), VertexId(1)), Some(Weight(1)));
        assert_eq!(terms, vec![VertexId(0), VertexId(2)]);
    }

    #[test]
    fn duplicate_edge_keeps_min() {
        let text = "SECTION Graph\nNodes 2\nEdges 2\nE 1 2 5\nE 2 1 3\nEND\nEOF\n";
        let (g, _) = parse_stp(text).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.edge_weight(VertexId(0), VertexId(1)), Some(Weight(3)));
    }

    #[test]
    fn fractional_weights_scale_by_common_denominator() {
        let text = "SECTION Graph\nNodes 3\nEdges 2\nE 1 2 0.5\nE 2 3 1.5\nEND\nEOF\n";
        let (g, _) = parse_stp(text).unwrap();
        assert_eq!(g.scale(), 2);
        assert_eq!(g.edge_weight(VertexId(0), VertexId(1)), Some(Weight(1)));
        assert_eq!(g.edge_weight(VertexId(1), VertexId(2)), Some(Weight(3)));
    }

    #[test]
    fn rejects_zero_weight() {
        let text = "SECTION Graph\nNodes 2\nEdges 1\nE 1 2 0\nEND\nEOF\n";
        assert!(matches!(parse_stp(text), Err(Error::Parse { line: 4, .. })));
    }

    #[test]
    fn rejects_out_of_range_node() {
        let text = "SECTION Graph\nNodes 2\nEdges 1\nE 1 5 2\nEND\nEOF\n";
        let err = parse_stp(text).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err}");
    }

    #[test]
    fn keywords_are_case_insensitive() {
        let text = "section graph\nnodes 2\nedges 1\ne 1 2 4\nend\neof\n";
        let (g, _) = parse_stp(text).unwrap();
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn edge_list_renumbers_densely() {
        let text = "# sample\n10 20 1\n20 35 2.5\n";
        let g = parse_edge_list(text).unwrap();
        assert_eq!(g.vertex_count(), 3);
        assert_eq!(g.scale(), 2);
        assert_eq!(g.label(VertexId(0)), 10);
        assert_eq!(g.label(VertexId(2)), 35);
        assert_eq!(g.edge_weight(VertexId(0), VertexId(1)), Some(Weight(2)));
        assert_eq!(g.edge_weight(VertexId(1), VertexId(2)), Some(Weight(5)));
    }
}
