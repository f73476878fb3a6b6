//! Community detection for when no partition is supplied: Louvain
//! modularity optimization and the ECG ensemble built on top of it.
//! Directed graphs are clustered on their symmetrization
//! `w(u, v) + w(v, u)`.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{Graph, Partition};
use crate::rng::{derive_seed, seeded};

pub const ECG_MIN_WEIGHT: f64 = 0.05;
pub const ECG_ENSEMBLE_SIZE: usize = 16;

/// Gains below this are treated as no improvement.
const GAIN_EPS: f64 = 1e-12;

/// Undirected weighted adjacency; `loops[i]` is the self-loop weight
/// counted once per endpoint (so twice the internal weight).
#[derive(Debug, Clone)]
struct SymGraph {
    adj: Vec<Vec<(usize, f64)>>,
    loops: Vec<f64>,
}

impl SymGraph {
    fn from_graph(graph: &Graph) -> Self {
        let n = graph.n();
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for e in graph.edges() {
            adj[e.src].push((e.dst, e.weight));
            adj[e.dst].push((e.src, e.weight));
        }
        let mut g = SymGraph {
            adj,
            loops: vec![0.0; n],
        };
        g.merge_parallel();
        g
    }

    /// Sorts neighbour lists and sums repeated entries.
    fn merge_parallel(&mut self) {
        for list in &mut self.adj {
            list.sort_by_key(|&(v, _)| v);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(list.len());
            for &(v, w) in list.iter() {
                match merged.last_mut() {
                    Some(last) if last.0 == v => last.1 += w,
                    _ => merged.push((v, w)),
                }
            }
            *list = merged;
        }
    }

    fn n(&self) -> usize {
        self.adj.len()
    }

    fn strength(&self, i: usize) -> f64 {
        self.loops[i] + self.adj[i].iter().map(|&(_, w)| w).sum::<f64>()
    }

    fn total(&self) -> f64 {
        (0..self.n()).map(|i| self.strength(i)).sum()
    }

    /// Collapses each community into one node.
    fn aggregate(&self, labels: &[usize], count: usize) -> SymGraph {
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); count];
        let mut loops = vec![0.0; count];
        for i in 0..self.n() {
            let a = labels[i];
            loops[a] += self.loops[i];
            for &(j, w) in &self.adj[i] {
                let b = labels[j];
                if a == b {
                    loops[a] += w;
                } else {
                    adj[a].push((b, w));
                }
            }
        }
        let mut g = SymGraph { adj, loops };
        g.merge_parallel();
        g
    }

    fn modularity(&self, labels: &[usize]) -> f64 {
        let m2 = self.total();
        if m2 == 0.0 {
            return 0.0;
        }
        let groups = labels.iter().max().map_or(0, |m| m + 1);
        let mut internal = vec![0.0; groups];
        let mut tot = vec![0.0; groups];
        for i in 0..self.n() {
            let c = labels[i];
            tot[c] += self.strength(i);
            internal[c] += self.loops[i];
            for &(j, w) in &self.adj[i] {
                if labels[j] == c {
                    internal[c] += w;
                }
            }
        }
        internal
            .iter()
            .zip(&tot)
            .map(|(e, t)| e / m2 - (t / m2) * (t / m2))
            .sum()
    }
}

/// Relabels to `0..count` by first appearance.
fn compact(labels: &mut [usize]) -> usize {
    let mut map = vec![usize::MAX; labels.iter().max().map_or(0, |m| m + 1)];
    let mut next = 0;
    for l in labels.iter_mut() {
        if map[*l] == usize::MAX {
            map[*l] = next;
            next += 1;
        }
        *l = map[*l];
    }
    next
}

/// Local moving phase. Returns the labels and whether any node moved.
fn local_moving(g: &SymGraph, seed: u64) -> (Vec<usize>, bool) {
    let n = g.n();
    let m2 = g.total();
    let mut labels: Vec<usize> = (0..n).collect();
    if m2 == 0.0 {
        return (labels, false);
    }
    let strength: Vec<f64> = (0..n).map(|i| g.strength(i)).collect();
    let mut tot = strength.clone();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded(seed));
    let mut link = vec![0.0; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut seen = vec![false; n];
    let mut moved_any = false;

    loop {
        let mut moved = false;
        for &i in &order {
            let own = labels[i];
            for &(j, w) in &g.adj[i] {
                let c = labels[j];
                if !seen[c] {
                    seen[c] = true;
                    touched.push(c);
                }
                link[c] += w;
            }
            tot[own] -= strength[i];
            let k = strength[i];
            let gain = |c: usize, link: &[f64], tot: &[f64]| link[c] - tot[c] * k / m2;
            let stay = gain(own, &link, &tot);
            touched.sort_unstable();
            let mut best = own;
            let mut best_gain = stay;
            for &c in &touched {
                let v = gain(c, &link, &tot);
                if v > best_gain + GAIN_EPS {
                    best = c;
                    best_gain = v;
                }
            }
            // Lowest-index community among those attaining the maximum.
            if best != own {
                if let Some(&c) = touched.iter().find(|&&c| gain(c, &link, &tot) >= best_gain - GAIN_EPS) {
                    best = c;
                }
            }
            tot[best] += strength[i];
            if best != own {
                labels[i] = best;
                moved = true;
                moved_any = true;
            }
            for &c in &touched {
                link[c] = 0.0;
                seen[c] = false;
            }
            touched.clear();
        }
        if !moved {
            break;
        }
    }
    (labels, moved_any)
}

fn louvain_sym(g: &SymGraph, seed: u64) -> Vec<usize> {
    let mut assignment: Vec<usize> = (0..g.n()).collect();
    let mut current = g.clone();
    for level in 0.. {
        let (mut labels, moved) = local_moving(&current, derive_seed(seed, level));
        if !moved {
            break;
        }
        let count = compact(&mut labels);
        for a in assignment.iter_mut() {
            *a = labels[*a];
        }
        current = current.aggregate(&labels, count);
    }
    compact(&mut assignment);
    assignment
}

/// Multi-level Louvain; deterministic for a given seed.
pub fn louvain(graph: &Graph, seed: u64) -> Partition {
    let g = SymGraph::from_graph(graph);
    Partition::from_labels(&louvain_sym(&g, seed))
}

/// One local-moving pass on the original graph, no aggregation.
pub fn louvain_level1(graph: &Graph, seed: u64) -> Partition {
    let g = SymGraph::from_graph(graph);
    let (labels, _) = local_moving(&g, derive_seed(seed, 0));
    Partition::from_labels(&labels)
}

/// Newman modularity of `partition` on the symmetrized graph.
pub fn modularity(graph: &Graph, partition: &Partition) -> Result<f64> {
    if partition.n() != graph.n() {
        return Err(Error::LengthMismatch {
            left: partition.n(),
            right: graph.n(),
        });
    }
    Ok(SymGraph::from_graph(graph).modularity(partition.labels()))
}

/// ECG re-weights: for every symmetrized edge `(u, v)` with `u < v`, the
/// fraction of level-1 passes clustering both endpoints together, floored
/// at `min_weight`.
pub fn ecg_weights(graph: &Graph, ensemble_size: usize, min_weight: f64, seed: u64) -> Result<Vec<(usize, usize, f64)>> {
    if ensemble_size < 2 {
        return Err(Error::InvalidArgument(format!(
            "ECG needs an ensemble of at least 2 passes, got {ensemble_size}"
        )));
    }
    if graph.weighted() {
        return Err(Error::InvalidArgument(
            "ECG applies to unweighted graphs; use Louvain".into(),
        ));
    }
    let g = SymGraph::from_graph(graph);
    let passes: Vec<Vec<usize>> = (0..ensemble_size as u64)
        .into_par_iter()
        .map(|p| local_moving(&g, derive_seed(derive_seed(seed, p), 0)).0)
        .collect();
    let mut out = Vec::new();
    for u in 0..g.n() {
        for &(v, _) in &g.adj[u] {
            if u < v {
                let together = passes.iter().filter(|l| l[u] == l[v]).count();
                let frac = together as f64 / ensemble_size as f64;
                out.push((u, v, frac.max(min_weight)));
            }
        }
    }
    Ok(out)
}

/// Ensemble clustering: Louvain on the co-clustering re-weighted graph.
pub fn ecg(graph: &Graph, ensemble_size: usize, seed: u64) -> Result<Partition> {
    let weights = ecg_weights(graph, ensemble_size, ECG_MIN_WEIGHT, seed)?;
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); graph.n()];
    for &(u, v, w) in &weights {
        adj[u].push((v, w));
        adj[v].push((u, w));
    }
    let mut g = SymGraph {
        adj,
        loops: vec![0.0; graph.n()],
    };
    g.merge_parallel();
    Ok(Partition::from_labels(&louvain_sym(&g, seed)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Edge;

    fn two_cliques() -> Graph {
        let mut edges = Vec::new();
        for base in [0, 5] {
            for i in 0..5 {
                for j in i + 1..5 {
                    edges.push(Edge::unit(base + i, base + j));
                }
            }
        }
        edges.push(Edge::unit(4, 5));
        Graph::new(10, false, edges).unwrap()
    }

    fn expected_split(p: &Partition) {
        assert_eq!(p.count(), 2);
        for i in 0..5 {
            assert_eq!(p.label(i), p.label(0));
            assert_eq!(p.label(i + 5), p.label(5));
        }
        assert_ne!(p.label(0), p.label(5));
    }

    #[test]
    fn louvain_separates_cliques() {
        for seed in 0..10 {
            expected_split(&louvain(&two_cliques(), seed));
        }
    }

    #[test]
    fn louvain_beats_singletons_on_complete_graph() {
        let mut edges = Vec::new();
        for i in 0..6 {
            for j in i + 1..6 {
                edges.push(Edge::unit(i, j));
            }
        }
        let g = Graph::new(6, false, edges).unwrap();
        let p = louvain(&g, 3);
        let singletons = Partition::from_labels(&(0..6).collect::<Vec<_>>());
        assert!(modularity(&g, &p).unwrap() >= modularity(&g, &singletons).unwrap());
    }

    #[test]
    fn components_never_merge() {
        let g = Graph::new(
            6,
            true,
            vec![Edge::unit(0, 1), Edge::unit(1, 2), Edge::unit(3, 4), Edge::unit(4, 5)],
        )
        .unwrap();
        let p = louvain(&g, 1);
        for (a, b) in [(0, 3), (1, 4), (2, 5)] {
            assert_ne!(p.label(a), p.label(b));
        }
    }

    #[test]
    fn modularity_of_known_partition() {
        // Two disjoint edges, each its own community: Q = 2 (1/2 - 1/4) = 0.5.
        let g = Graph::new(4, false, vec![Edge::unit(0, 1), Edge::unit(2, 3)]).unwrap();
        let p = Partition::from_labels(&[0, 0, 1, 1]);
        assert!((modularity(&g, &p).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ecg_matches_louvain_on_cliques() {
        let g = two_cliques();
        expected_split(&ecg(&g, 8, 5).unwrap());
        let w = ecg_weights(&g, 8, ECG_MIN_WEIGHT, 5).unwrap();
        let bridge = w.iter().find(|e| (e.0, e.1) == (4, 5)).unwrap().2;
        let inner = w.iter().find(|e| (e.0, e.1) == (0, 1)).unwrap().2;
        assert!(inner >= bridge);
        assert!(w.iter().all(|e| (ECG_MIN_WEIGHT..=1.0).contains(&e.2)));
        assert!(ecg(&g, 1, 0).is_err());
    }

    #[test]
    fn deterministic_under_seed() {
        let (g, _) = crate::synth::gen_sbm(200, 4, 0.15, 0.02, true, 3).unwrap();
        assert_eq!(louvain(&g, 9), louvain(&g, 9));
        assert_eq!(ecg(&g, 6, 9).unwrap(), ecg(&g, 6, 9).unwrap());
    }
}
