//! Whitespace-separated text formats.
//!
//! * graph: `src dst [weight]` per line
//! * embedding: `node x1 ... xk` per line
//! * partition: `node label` per line
//!
//! Blank lines and lines starting with `#` are skipped. Node ids are
//! arbitrary tokens; the graph assigns indices in order of first appearance.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Location, Result};
use crate::graph::{Edge, Embedding, Graph, Partition};

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Data lines with their 1-based line numbers.
fn records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            None
        } else {
            Some((i + 1, line.split_whitespace().collect()))
        }
    })
}

pub fn load_graph(path: impl AsRef<Path>, directed: bool) -> Result<Graph> {
    parse_graph(&read(path.as_ref())?, directed)
}

pub fn parse_graph(text: &str, directed: bool) -> Result<Graph> {
    let mut ids: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut edges = Vec::new();
    let mut lines = Vec::new();
    let mut has_weights = false;
    let mut intern = |id: &str| -> usize {
        if let Some(&i) = index.get(id) {
            return i;
        }
        ids.push(id.to_string());
        index.insert(id.to_string(), ids.len() - 1);
        ids.len() - 1
    };
    for (line, fields) in records(text) {
        let weight = match fields.len() {
            2 => 1.0,
            3 => {
                has_weights = true;
                fields[2]
                    .parse::<f64>()
                    .map_err(|_| Error::parse(line, format!("bad weight {:?}", fields[2])))?
            }
            _ => {
                return Err(Error::parse(
                    line,
                    format!("expected `src dst [weight]`, found {} fields", fields.len()),
                ))
            }
        };
        if fields[0] == fields[1] {
            return Err(Error::SelfLoop {
                location: Location(Some(line)),
                node: fields[0].to_string(),
            });
        }
        let src = intern(fields[0]);
        let dst = intern(fields[1]);
        edges.push(Edge::new(src, dst, weight));
        lines.push(line);
    }
    let graph = Graph::build(ids, directed, edges, &lines)?;
    Ok(if has_weights {
        graph.with_weighted(true)
    } else {
        graph
    })
}

pub fn load_embedding(path: impl AsRef<Path>, graph: &Graph) -> Result<Embedding> {
    parse_embedding(&read(path.as_ref())?, graph)
}

pub fn parse_embedding(text: &str, graph: &Graph) -> Result<Embedding> {
    let n = graph.n();
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; n];
    let mut dim = None;
    for (line, fields) in records(text) {
        let location = Location(Some(line));
        let node = fields[0];
        let i = graph.index_of(node).ok_or_else(|| Error::UnknownNode {
            location,
            node: node.to_string(),
        })?;
        let values = &fields[1..];
        let expected = *dim.get_or_insert(values.len());
        if values.is_empty() || values.len() != expected {
            return Err(Error::DimensionMismatch {
                location,
                expected,
                found: values.len(),
            });
        }
        let mut row = Vec::with_capacity(values.len());
        for v in values {
            let x: f64 = v
                .parse()
                .map_err(|_| Error::parse(line, format!("bad coordinate {v:?}")))?;
            if !x.is_finite() {
                return Err(Error::NonFinite {
                    location,
                    node: node.to_string(),
                });
            }
            row.push(x);
        }
        if rows[i].replace(row).is_some() {
            return Err(Error::DuplicateNode {
                location,
                node: node.to_string(),
            });
        }
    }
    let rows = rows
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.ok_or_else(|| Error::MissingNode(graph.id(i).to_string())))
        .collect::<Result<Vec<_>>>()?;
    Embedding::from_rows(&rows)
}

pub fn load_partition(path: impl AsRef<Path>, graph: &Graph) -> Result<Partition> {
    parse_partition(&read(path.as_ref())?, graph)
}

pub fn parse_partition(text: &str, graph: &Graph) -> Result<Partition> {
    let mut raw: Vec<Option<String>> = vec![None; graph.n()];
    for (line, fields) in records(text) {
        let location = Location(Some(line));
        if fields.len() != 2 {
            return Err(Error::parse(
                line,
                format!("expected `node label`, found {} fields", fields.len()),
            ));
        }
        let i = graph.index_of(fields[0]).ok_or_else(|| Error::UnknownNode {
            location,
            node: fields[0].to_string(),
        })?;
        if raw[i].replace(fields[1].to_string()).is_some() {
            return Err(Error::DuplicateNode {
                location,
                node: fields[0].to_string(),
            });
        }
    }
    let labels = raw
        .into_iter()
        .enumerate()
        .map(|(i, l)| l.ok_or_else(|| Error::MissingNode(graph.id(i).to_string())))
        .collect::<Result<Vec<_>>>()?;
    let partition = Partition::from_labels(&labels);
    partition.ensure_scorable()?;
    Ok(partition)
}

pub fn format_graph(graph: &Graph) -> String {
    let mut out = String::new();
    for e in graph.edges() {
        if graph.weighted() {
            let _ = writeln!(out, "{} {} {}", graph.id(e.src), graph.id(e.dst), e.weight);
        } else {
            let _ = writeln!(out, "{} {}", graph.id(e.src), graph.id(e.dst));
        }
    }
    out
}

/// Nodes without edges cannot appear in an edge list, so the embedding and
/// partition writers skip them to keep the three files loadable together.
fn listed(graph: &Graph, i: usize) -> bool {
    graph.w_out()[i] + graph.w_in()[i] > 0.0
}

pub fn format_embedding(graph: &Graph, embedding: &Embedding) -> String {
    let mut out = String::new();
    for i in (0..embedding.n()).filter(|&i| listed(graph, i)) {
        out.push_str(graph.id(i));
        for x in embedding.row(i) {
            let _ = write!(out, " {x}");
        }
        out.push('\n');
    }
    out
}

pub fn format_partition(graph: &Graph, partition: &Partition) -> String {
    let mut out = String::new();
    for (i, c) in partition.labels().iter().enumerate().filter(|(i, _)| listed(graph, *i)) {
        let _ = writeln!(out, "{} {}", graph.id(i), c);
    }
    out
}

pub fn write_graph(path: impl AsRef<Path>, graph: &Graph) -> Result<()> {
    write(path.as_ref(), &format_graph(graph))
}

pub fn write_embedding(path: impl AsRef<Path>, graph: &Graph, embedding: &Embedding) -> Result<()> {
    write(path.as_ref(), &format_embedding(graph, embedding))
}

pub fn write_partition(path: impl AsRef<Path>, graph: &Graph, partition: &Partition) -> Result<()> {
    write(path.as_ref(), &format_partition(graph, partition))
}
