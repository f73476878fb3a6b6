//! Core data types: the input graph, a node embedding and a node partition.
//!
//! All three are immutable once built and share the graph's canonical node
//! indexing `0..n`.

use std::collections::HashMap;

use crate::error::{Error, Location, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub weight: f64,
}

impl Edge {
    pub fn new(src: usize, dst: usize, weight: f64) -> Self {
        Edge { src, dst, weight }
    }

    pub fn unit(src: usize, dst: usize) -> Self {
        Edge::new(src, dst, 1.0)
    }
}

/// A directed or undirected weighted graph without self-loops or multi-edges.
///
/// Undirected edges are stored once; `w_in` and `w_out` then both hold the
/// node strength.
#[derive(Debug, Clone)]
pub struct Graph {
    directed: bool,
    weighted: bool,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    edges: Vec<Edge>,
    w_out: Vec<f64>,
    w_in: Vec<f64>,
    // (neighbour, weight) sorted by neighbour; for undirected graphs each
    // edge appears in both endpoint lists.
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl Graph {
    /// Builds a graph over nodes named `"0"`, `"1"`, ... `n-1`.
    pub fn new(n: usize, directed: bool, edges: Vec<Edge>) -> Result<Self> {
        let ids = (0..n).map(|i| i.to_string()).collect();
        Graph::with_ids(ids, directed, edges)
    }

    pub fn with_ids(ids: Vec<String>, directed: bool, edges: Vec<Edge>) -> Result<Self> {
        Graph::build(ids, directed, edges, &[])
    }

    /// `lines[e]` is the 1-based source line of `edges[e]`, used in errors.
    pub(crate) fn build(
        ids: Vec<String>,
        directed: bool,
        edges: Vec<Edge>,
        lines: &[usize],
    ) -> Result<Self> {
        let n = ids.len();
        if edges.is_empty() {
            return Err(Error::EmptyGraph);
        }
        let mut index = HashMap::with_capacity(n);
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::DuplicateNode {
                    location: Location(None),
                    node: id.clone(),
                });
            }
        }

        let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut w_out = vec![0.0; n];
        let mut w_in = vec![0.0; n];
        let mut weighted = false;
        for (e, edge) in edges.iter().enumerate() {
            let location = Location(lines.get(e).copied());
            if edge.src >= n || edge.dst >= n {
                return Err(Error::InvalidArgument(format!(
                    "edge {} -> {} references a node outside 0..{n}",
                    edge.src, edge.dst
                )));
            }
            if edge.src == edge.dst {
                return Err(Error::SelfLoop {
                    location,
                    node: ids[edge.src].clone(),
                });
            }
            if !(edge.weight > 0.0 && edge.weight.is_finite()) {
                return Err(Error::NonPositiveWeight {
                    location,
                    weight: edge.weight,
                });
            }
            weighted |= edge.weight != 1.0;
            adjacency[edge.src].push((edge.dst, edge.weight));
            if !directed {
                adjacency[edge.dst].push((edge.src, edge.weight));
            }
            w_out[edge.src] += edge.weight;
            w_in[edge.dst] += edge.weight;
        }
        for list in &mut adjacency {
            list.sort_by_key(|&(v, _)| v);
        }
        // Duplicates show up as equal neighbours after sorting; report the
        // later of the two input edges.
        for (u, list) in adjacency.iter().enumerate() {
            if let Some(w) = list.windows(2).find(|w| w[0].0 == w[1].0) {
                let v = w[0].0;
                let line = edges
                    .iter()
                    .enumerate()
                    .filter(|(_, e)| {
                        (e.src == u && e.dst == v) || (!directed && e.src == v && e.dst == u)
                    })
                    .map(|(i, _)| lines.get(i).copied())
                    .next_back()
                    .flatten();
                return Err(Error::DuplicateEdge {
                    location: Location(line),
                    src: ids[u].clone(),
                    dst: ids[v].clone(),
                });
            }
        }
        if !directed {
            for i in 0..n {
                let s = w_out[i] + w_in[i];
                w_out[i] = s;
                w_in[i] = s;
            }
        }

        Ok(Graph {
            directed,
            weighted,
            ids,
            index,
            edges,
            w_out,
            w_in,
            adjacency,
        })
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn directed(&self) -> bool {
        self.directed
    }

    /// True when any edge weight differs from 1, or when forced.
    pub fn weighted(&self) -> bool {
        self.weighted
    }

    pub fn with_weighted(mut self, weighted: bool) -> Self {
        self.weighted = weighted;
        self
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn w_out(&self) -> &[f64] {
        &self.w_out
    }

    pub fn w_in(&self) -> &[f64] {
        &self.w_in
    }

    /// Total edge weight, each undirected edge counted once.
    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.weight).sum()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Out-neighbours (all neighbours for undirected graphs) with weights.
    pub fn neighbors(&self, u: usize) -> &[(usize, f64)] {
        &self.adjacency[u]
    }

    /// Weight of the directed pair `u -> v`; for undirected graphs either
    /// orientation matches.
    pub fn edge_weight(&self, u: usize, v: usize) -> Option<f64> {
        let list = &self.adjacency[u];
        list.binary_search_by_key(&v, |&(w, _)| w)
            .ok()
            .map(|i| list[i].1)
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edge_weight(u, v).is_some()
    }

    /// Number of ordered pairs `(u, v)`, `u != v`, that are edges.
    pub fn positive_pair_count(&self) -> usize {
        if self.directed {
            self.edges.len()
        } else {
            2 * self.edges.len()
        }
    }

    /// Every edge as directed arcs: undirected edges are emitted in both
    /// orientations.
    pub fn arcs(&self) -> impl Iterator<Item = Edge> + '_ {
        let both = !self.directed;
        self.edges.iter().flat_map(move |e| {
            let rev = both.then(|| Edge::new(e.dst, e.src, e.weight));
            std::iter::once(*e).chain(rev)
        })
    }
}

/// Node coordinates, one row per node in the graph's canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    n: usize,
    k: usize,
    coords: Vec<f64>,
}

impl Embedding {
    /// `coords` is row-major, `n * k` values.
    pub fn new(n: usize, k: usize, coords: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::DegenerateEmbedding(format!(
                "need at least 2 nodes, got {n}"
            )));
        }
        if k == 0 {
            return Err(Error::DegenerateEmbedding("dimension is zero".into()));
        }
        if coords.len() != n * k {
            return Err(Error::LengthMismatch {
                left: coords.len(),
                right: n * k,
            });
        }
        if let Some(i) = coords.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                location: Location(None),
                node: (i / k).to_string(),
            });
        }
        let emb = Embedding { n, k, coords };
        let first = emb.row(0);
        if (1..n).all(|i| emb.row(i) == first) {
            return Err(Error::DegenerateEmbedding(
                "all points coincide (d_max = d_min)".into(),
            ));
        }
        Ok(emb)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != k) {
            return Err(Error::DimensionMismatch {
                location: Location(None),
                expected: k,
                found: bad.len(),
            });
        }
        Embedding::new(rows.len(), k, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.coords[i * self.k..(i + 1) * self.k]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Applies `f` to every row, keeping validation.
    pub fn map_rows(&self, mut f: impl FnMut(usize, &[f64]) -> Vec<f64>) -> Result<Self> {
        let rows: Vec<Vec<f64>> = (0..self.n).map(|i| f(i, self.row(i))).collect();
        Embedding::from_rows(&rows)
    }
}

/// Assignment of every node to one of `count` communities labelled `0..count`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    labels: Vec<usize>,
    count: usize,
}

impl Partition {
    /// Relabels arbitrary labels to `0..count` in order of first appearance.
    pub fn from_labels<T: std::hash::Hash + Eq>(raw: &[T]) -> Self {
        let mut map: HashMap<&T, usize> = HashMap::new();
        let labels = raw
            .iter()
            .map(|l| {
                let next = map.len();
                *map.entry(l).or_insert(next)
            })
            .collect();
        Partition {
            labels,
            count: map.len(),
        }
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn label(&self, node: usize) -> usize {
        self.labels[node]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.count];
        for (node, &c) in self.labels.iter().enumerate() {
            groups[c].push(node);
        }
        groups
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.count];
        for &c in &self.labels {
            sizes[c] += 1;
        }
        sizes
    }

    /// Scoring needs at least two communities.
    pub fn ensure_scorable(&self) -> Result<()> {
        if self.count < 2 {
            Err(Error::SingleCommunity)
        } else {
            Ok(())
        }
    }
}

/// Checks that all three inputs describe the same node set.
pub(crate) fn check_aligned(
    graph: &Graph,
    embedding: Option<&Embedding>,
    partition: Option<&Partition>,
) -> Result<()> {
    if let Some(e) = embedding {
        if e.n() != graph.n() {
            return Err(Error::LengthMismatch {
                left: e.n(),
                right: graph.n(),
            });
        }
    }
    if let Some(p) = partition {
        if p.n() != graph.n() {
            return Err(Error::LengthMismatch {
                left: p.n(),
                right: graph.n(),
            });
        }
        p.ensure_scorable()?;
    }
    Ok(())
}
