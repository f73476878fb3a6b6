//! Seeded synthetic inputs: stochastic block model graphs, clustered
//! embeddings and the two perturbations (within-community rewiring,
//! community inflation) used to separate the global and local scores.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::graph::{Edge, Embedding, Graph, Partition};
use crate::rng::seeded;

/// Block of node `i` when `n` nodes are split into `blocks` near-equal runs.
fn block_labels(n: usize, blocks: usize) -> Vec<usize> {
    (0..n).map(|i| i * blocks / n).collect()
}

/// Directed or undirected SBM with contiguous near-equal blocks.
pub fn gen_sbm(
    n: usize,
    blocks: usize,
    p_in: f64,
    p_out: f64,
    directed: bool,
    seed: u64,
) -> Result<(Graph, Partition)> {
    if blocks == 0 || blocks > n {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= blocks <= n, got blocks={blocks}, n={n}"
        )));
    }
    if !(0.0..=1.0).contains(&p_in) || !(0.0..=1.0).contains(&p_out) || p_out > p_in {
        return Err(Error::InvalidArgument(format!(
            "need 0 <= p_out <= p_in <= 1, got p_in={p_in}, p_out={p_out}"
        )));
    }
    let labels = block_labels(n, blocks);
    let mut rng = seeded(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        let start = if directed { 0 } else { i + 1 };
        for j in start..n {
            if i == j {
                continue;
            }
            let p = if labels[i] == labels[j] { p_in } else { p_out };
            if rng.random::<f64>() < p {
                edges.push(Edge::unit(i, j));
            }
        }
    }
    let graph = Graph::new(n, directed, edges)?;
    Ok((graph, Partition::from_labels(&labels)))
}

/// Community centres at least `spread` apart plus isotropic Gaussian noise
/// of standard deviation `noise * spread`.
pub fn gen_embedding(
    partition: &Partition,
    k: usize,
    spread: f64,
    noise: f64,
    seed: u64,
) -> Result<Embedding> {
    if k < 2 || !(spread > 0.0) || !(noise >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need k >= 2, spread > 0, noise >= 0; got k={k}, spread={spread}, noise={noise}"
        )));
    }
    let mut rng = seeded(seed);
    let centers = place_centers(partition.count(), k, spread, &mut rng);
    let normal = Normal::new(0.0, noise * spread).expect("non-negative std dev");
    let rows: Vec<Vec<f64>> = partition
        .labels()
        .iter()
        .map(|&c| {
            centers[c]
                .iter()
                .map(|&x| if noise > 0.0 { x + normal.sample(&mut rng) } else { x })
                .collect()
        })
        .collect();
    Embedding::from_rows(&rows)
}

/// Equidistant centres on scaled coordinate axes when they fit in `k`
/// dimensions, otherwise random placement with a minimum separation.
fn place_centers(count: usize, k: usize, spread: f64, rng: &mut crate::rng::Rng) -> Vec<Vec<f64>> {
    if count <= k {
        let r = spread / std::f64::consts::SQRT_2;
        return (0..count)
            .map(|c| (0..k).map(|a| if a == c { r } else { 0.0 }).collect())
            .collect();
    }
    let per_axis = (count as f64).powf(1.0 / k as f64).ceil().max(2.0);
    let side = 2.0 * per_axis * spread;
    let far_enough = |c: &[f64], placed: &[Vec<f64>]| {
        placed.iter().all(|p| {
            let d2: f64 = p.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
            d2 >= spread * spread
        })
    };
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(count);
    let mut attempts = 0;
    while centers.len() < count && attempts < 100_000 {
        attempts += 1;
        let c: Vec<f64> = (0..k).map(|_| rng.random::<f64>() * side).collect();
        if far_enough(&c, &centers) {
            centers.push(c);
        }
    }
    // Fallback: lattice with spacing `spread` along the first two axes.
    while centers.len() < count {
        let i = centers.len();
        let cols = (count as f64).sqrt().ceil() as usize;
        let mut c = vec![0.0; k];
        c[0] = side + (i % cols) as f64 * spread;
        c[1] = side + (i / cols) as f64 * spread;
        if far_enough(&c, &centers) {
            centers.push(c);
        } else {
            centers.push(c.iter().map(|x| x + 2.0 * side).collect());
        }
    }
    centers
}

/// Replaces a fraction of each community's internal edges with random
/// internal non-edges, keeping the weight of the removed edge. Returns the
/// new graph and how many edges were moved.
pub fn rewire_within(
    graph: &Graph,
    partition: &Partition,
    fraction: f64,
    seed: u64,
) -> Result<(Graph, usize)> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!(
            "fraction must lie in [0, 1], got {fraction}"
        )));
    }
    if partition.n() != graph.n() {
        return Err(Error::LengthMismatch {
            left: partition.n(),
            right: graph.n(),
        });
    }
    let directed = graph.directed();
    let key = |u: usize, v: usize| if directed || u < v { (u, v) } else { (v, u) };
    let mut rng = seeded(seed);
    let mut present: HashSet<(usize, usize)> =
        graph.edges().iter().map(|e| key(e.src, e.dst)).collect();
    let mut edges: Vec<Option<Edge>> = graph.edges().iter().copied().map(Some).collect();
    let mut added = Vec::new();
    let mut moved = 0;

    for members in partition.members() {
        let c = partition.label(members[0]);
        let mut internal: Vec<usize> = graph
            .edges()
            .iter()
            .enumerate()
            .filter(|(_, e)| partition.label(e.src) == c && partition.label(e.dst) == c)
            .map(|(i, _)| i)
            .collect();
        let s = members.len();
        let pairs = if directed { s * (s - 1) } else { s * (s - 1) / 2 };
        let available = pairs - internal.len();
        let wanted = ((fraction * internal.len() as f64).round() as usize).min(available);
        if wanted == 0 {
            continue;
        }
        internal.shuffle(&mut rng);
        let chosen = &internal[..wanted];

        let mut fresh = Vec::with_capacity(wanted);
        if available <= 4 * wanted || pairs <= 100_000 {
            let mut candidates = Vec::with_capacity(available);
            for (a, &u) in members.iter().enumerate() {
                let from = if directed { 0 } else { a + 1 };
                for &v in &members[from..] {
                    if u != v && !present.contains(&key(u, v)) {
                        candidates.push((u, v));
                    }
                }
            }
            candidates.shuffle(&mut rng);
            fresh.extend_from_slice(&candidates[..wanted]);
        } else {
            let mut taken = HashSet::new();
            while fresh.len() < wanted {
                let u = members[rng.random_range(0..s)];
                let v = members[rng.random_range(0..s)];
                if u != v && !present.contains(&key(u, v)) && taken.insert(key(u, v)) {
                    fresh.push((u, v));
                }
            }
        }
        for (&e, &(u, v)) in chosen.iter().zip(&fresh) {
            let old = edges[e].take().expect("each edge chosen once");
            added.push(Edge::new(u, v, old.weight));
        }
        for &(u, v) in &fresh {
            present.insert(key(u, v));
        }
        moved += wanted;
    }
    let edges: Vec<Edge> = edges.into_iter().flatten().chain(added).collect();
    let rewired = Graph::with_ids(graph.ids().to_vec(), directed, edges)?.with_weighted(graph.weighted());
    Ok((rewired, moved))
}

/// Moves every node away from its community centroid by `factor`.
pub fn rescale_communities(
    embedding: &Embedding,
    partition: &Partition,
    factor: f64,
) -> Result<Embedding> {
    if !(factor >= 1.0 && factor.is_finite()) {
        return Err(Error::InvalidArgument(format!("factor must be >= 1, got {factor}")));
    }
    if partition.n() != embedding.n() {
        return Err(Error::LengthMismatch {
            left: partition.n(),
            right: embedding.n(),
        });
    }
    let centroids = centroids(embedding, partition);
    embedding.map_rows(|i, row| {
        let c = &centroids[partition.label(i)];
        row.iter()
            .zip(c)
            .map(|(x, m)| x + (factor - 1.0) * (x - m))
            .collect()
    })
}

/// Unweighted mean position of each community.
pub fn centroids(embedding: &Embedding, partition: &Partition) -> Vec<Vec<f64>> {
    let k = embedding.dim();
    let mut sums = vec![vec![0.0; k]; partition.count()];
    let sizes = partition.sizes();
    for i in 0..embedding.n() {
        for (s, x) in sums[partition.label(i)].iter_mut().zip(embedding.row(i)) {
            *s += x;
        }
    }
    for (s, &size) in sums.iter_mut().zip(&sizes) {
        s.iter_mut().for_each(|v| *v /= size as f64);
    }
    sums
}
