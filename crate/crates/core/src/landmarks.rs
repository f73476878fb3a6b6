//! Landmark approximation for large graphs. The community partition is
//! refined into `n'` groups of nearby nodes; each group becomes a landmark
//! at its strength-weighted centroid with a self-loop whose distance
//! reflects the group's spread. The null model is fitted on landmarks and
//! nodes inherit a share of their landmark's weights.

use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gcl::{
    fit_degrees, grouped_block_mass, BlockMass, DistanceKernel, FitOptions, GclConfig, GclModel, Geometry, Metric,
    Weights,
};
use crate::global::GlobalScoreResult;
use crate::graph::{check_aligned, Embedding, Graph, Partition};
use crate::local::{sample_pairs, LocalScoreResult};
use crate::rng::{derive_seed, seeded, Rng};
use crate::search::{search, Backend, SearchOptions, SearchOutcome};

/// Graphs with at least this many nodes are scored with landmarks by
/// default.
pub const LANDMARK_THRESHOLD: usize = 10_000;

const LLOYD_ROUNDS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkConfig {
    /// Landmark count; `None` means `max(ceil(4 sqrt n), 4 l)`.
    pub n_prime: Option<usize>,
    /// Parts per community when the requested count is below `l`.
    pub split_factor: usize,
    /// Self-loop terms in the landmark model.
    pub loops: bool,
    pub seed: u64,
}

impl Default for LandmarkConfig {
    fn default() -> Self {
        LandmarkConfig {
            n_prime: None,
            split_factor: 4,
            loops: true,
            seed: 0,
        }
    }
}

pub fn default_landmark_count(n: usize, communities: usize) -> usize {
    let root = (4.0 * (n as f64).sqrt()).ceil() as usize;
    root.max(4 * communities).min(n)
}

#[derive(Debug, Clone)]
pub struct LandmarkSet {
    directed: bool,
    positions: Embedding,
    spread: Vec<f64>,
    self_distance: Vec<f64>,
    geometry: Arc<Geometry>,
    view: Arc<LandmarkView>,
}

/// The parts of a landmark set that fitted models keep a handle on.
#[derive(Debug)]
struct LandmarkView {
    member_of: Vec<usize>,
    community_of: Vec<usize>,
    communities: usize,
    nodes: Embedding,
    metric: Metric,
    w_out: Vec<f64>,
    w_in: Vec<f64>,
    node_w_out: Vec<f64>,
    node_w_in: Vec<f64>,
}

impl LandmarkSet {
    pub fn n_prime(&self) -> usize {
        self.positions.n()
    }

    pub fn positions(&self) -> &Embedding {
        &self.positions
    }

    /// Weighted sum of squared distances to the centroid, per landmark.
    pub fn spread(&self) -> &[f64] {
        &self.spread
    }

    pub fn self_distance(&self) -> &[f64] {
        &self.self_distance
    }

    pub fn member_of(&self) -> &[usize] {
        &self.view.member_of
    }

    pub fn community_of(&self) -> &[usize] {
        &self.view.community_of
    }

    pub fn w_prime_out(&self) -> &[f64] {
        &self.view.w_out
    }

    pub fn w_prime_in(&self) -> &[f64] {
        &self.view.w_in
    }

    /// Kernel geometry over landmark positions.
    pub fn geometry(&self) -> &Arc<Geometry> {
        &self.geometry
    }

    /// Fits the landmark model at one alpha.
    pub fn fit(&self, alpha: f64, options: &FitOptions, init: Option<&Weights>) -> Result<LandmarkModel> {
        let s = &self.view;
        let model = fit_degrees(&s.w_out, &s.w_in, self.directed, &self.geometry, alpha, options, init)?;
        let inherit = |x: &[f64], node_w: &[f64], total: &[f64]| -> Vec<f64> {
            node_w
                .iter()
                .zip(&s.member_of)
                .map(|(&w, &i)| if total[i] > 0.0 { x[i] * w / total[i] } else { 0.0 })
                .collect()
        };
        let x_out = inherit(model.x_out(), &s.node_w_out, &s.w_out);
        let x_in = inherit(model.x_in(), &s.node_w_in, &s.w_in);
        let kernel = *model.kernel();
        Ok(LandmarkModel {
            model,
            kernel,
            x_out,
            x_in,
            set: Arc::clone(&self.view),
        })
    }
}

#[derive(Debug, Clone)]
pub struct LandmarkModel {
    model: GclModel,
    kernel: DistanceKernel,
    x_out: Vec<f64>,
    x_in: Vec<f64>,
    set: Arc<LandmarkView>,
}

impl LandmarkModel {
    /// The model fitted on landmarks.
    pub fn model(&self) -> &GclModel {
        &self.model
    }

    /// Inherited node out-weights.
    pub fn x_out(&self) -> &[f64] {
        &self.x_out
    }

    pub fn x_in(&self) -> &[f64] {
        &self.x_in
    }

    /// Approximate node-pair probability from inherited weights and the
    /// true embedding distance, clamped into the landmark kernel's range.
    pub fn p(&self, u: usize, v: usize) -> f64 {
        if u == v {
            return 0.0;
        }
        let s = &self.set;
        if let Some(det) = self.model.deterministic_p() {
            let (a, b) = (s.member_of[u], s.member_of[v]);
            let share_out = if s.w_out[a] > 0.0 { s.node_w_out[u] / s.w_out[a] } else { 0.0 };
            let share_in = if s.w_in[b] > 0.0 { s.node_w_in[v] / s.w_in[b] } else { 0.0 };
            return det.get(a, b) * share_out * share_in;
        }
        if self.x_out[u] == 0.0 || self.x_in[v] == 0.0 {
            return 0.0;
        }
        let d = s.metric.distance(s.nodes.row(u), s.nodes.row(v));
        self.x_out[u] * self.x_in[v] * self.kernel.eval_clamped(d)
    }

    /// Expected mass between communities, loops counted as internal.
    pub fn block_mass(&self) -> BlockMass {
        let mut sizes = vec![0; self.set.community_of.len()];
        self.set.member_of.iter().for_each(|&l| sizes[l] += 1);
        grouped_block_mass(&self.model, &self.set.community_of, self.set.communities, Some(&sizes))
    }
}

/// Refines `partition` into landmark groups and builds the landmark
/// geometry with `gcl`'s metric and clip.
pub fn refine_partition(
    graph: &Graph,
    embedding: &Embedding,
    partition: &Partition,
    config: &LandmarkConfig,
    gcl: &GclConfig,
) -> Result<LandmarkSet> {
    check_aligned(graph, Some(embedding), Some(partition))?;
    let n = graph.n();
    let l = partition.count();
    let target = config.n_prime.unwrap_or_else(|| default_landmark_count(n, l));
    if target > n {
        return Err(Error::InvalidArgument(format!(
            "landmark count {target} exceeds node count {n}"
        )));
    }
    if config.split_factor == 0 {
        return Err(Error::InvalidArgument("split factor must be positive".into()));
    }
    let weight: Vec<f64> = graph.w_out().iter().zip(graph.w_in()).map(|(a, b)| a + b).collect();
    let mut parts: Vec<Part> = partition
        .members()
        .into_iter()
        .map(|m| Part::new(m, embedding, &weight, gcl.metric))
        .collect();
    let mut splits = 0u64;
    let mut split = |part: &Part| -> (Part, Part) {
        let mut rng = seeded(derive_seed(config.seed, splits));
        splits += 1;
        two_means(part, embedding, &weight, gcl.metric, &mut rng)
    };

    if target < l {
        // Too few landmarks requested: split every community anyway.
        let mut refined = Vec::new();
        for community in parts {
            let mut pieces = vec![community];
            while pieces.len() < config.split_factor {
                let Some(i) = largest_splittable(&pieces) else { break };
                let (a, b) = split(&pieces[i]);
                pieces[i] = a;
                pieces.push(b);
            }
            refined.extend(pieces);
        }
        parts = refined;
    } else {
        while parts.len() < target {
            let i = largest_splittable(&parts).expect("target <= n keeps a part splittable");
            let (a, b) = split(&parts[i]);
            parts[i] = a;
            parts.push(b);
        }
    }
    build_set(graph, embedding, partition, parts, config.loops, gcl)
}

fn build_set(
    graph: &Graph,
    embedding: &Embedding,
    partition: &Partition,
    parts: Vec<Part>,
    loops: bool,
    gcl: &GclConfig,
) -> Result<LandmarkSet> {
    let n = graph.n();
    let metric = gcl.metric;
    let mut member_of = vec![0; n];
    let mut community_of = Vec::with_capacity(parts.len());
    let mut w_out = vec![0.0; parts.len()];
    let mut w_in = vec![0.0; parts.len()];
    let mut rows = Vec::with_capacity(parts.len());
    let mut spread = Vec::with_capacity(parts.len());
    let mut self_distance = Vec::with_capacity(parts.len());
    for (i, part) in parts.iter().enumerate() {
        for &v in &part.members {
            member_of[v] = i;
            w_out[i] += graph.w_out()[v];
            w_in[i] += graph.w_in()[v];
        }
        community_of.push(partition.label(part.members[0]));
        rows.push(part.centroid.clone());
        spread.push(part.error);
        self_distance.push(if part.mass > 0.0 {
            (part.error / part.mass).sqrt()
        } else {
            0.0
        });
    }
    let positions = Embedding::from_rows(&rows)?;
    let pad = self_distance.iter().copied().fold(0.0, f64::max);
    let (lo, hi) = pairwise_extremes(&positions, metric);
    let d_min = (lo - pad).max(0.0);
    let d_max = hi + pad;
    let loop_distances = loops.then(|| self_distance.iter().map(|d| d.clamp(d_min, d_max)).collect());
    let geometry = Arc::new(Geometry::with_bounds(
        positions.clone(),
        metric,
        d_min,
        d_max,
        gcl.clip,
        loop_distances,
    )?);
    Ok(LandmarkSet {
        directed: graph.directed(),
        positions,
        spread,
        self_distance,
        geometry,
        view: Arc::new(LandmarkView {
            member_of,
            community_of,
            communities: partition.count(),
            nodes: embedding.clone(),
            metric: gcl.metric,
            w_out,
            w_in,
            node_w_out: graph.w_out().to_vec(),
            node_w_in: graph.w_in().to_vec(),
        }),
    })
}

/// Min and max distance over distinct landmark pairs (zero allowed).
fn pairwise_extremes(points: &Embedding, metric: Metric) -> (f64, f64) {
    let n = points.n();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            let d = metric.distance(points.row(i), points.row(j));
            lo = lo.min(d);
            hi = hi.max(d);
        }
    }
    (lo, hi)
}

#[derive(Debug, Clone)]
struct Part {
    members: Vec<usize>,
    centroid: Vec<f64>,
    mass: f64,
    error: f64,
}

impl Part {
    fn new(members: Vec<usize>, embedding: &Embedding, weight: &[f64], metric: Metric) -> Self {
        let mass: f64 = members.iter().map(|&v| weight[v]).sum();
        // Parts made only of isolated nodes fall back to plain means.
        let w = |v: usize| if mass > 0.0 { weight[v] } else { 1.0 };
        let total = if mass > 0.0 { mass } else { members.len() as f64 };
        let mut centroid = vec![0.0; embedding.dim()];
        for &v in &members {
            for (c, x) in centroid.iter_mut().zip(embedding.row(v)) {
                *c += w(v) * x;
            }
        }
        centroid.iter_mut().for_each(|c| *c /= total);
        if let [only] = members[..] {
            centroid = embedding.row(only).to_vec();
        }
        let error = members
            .iter()
            .map(|&v| weight[v] * metric.distance(&centroid, embedding.row(v)).powi(2))
            .sum();
        Part {
            members,
            centroid,
            mass,
            error,
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the part with the largest error among those with at least two
/// members; ties go to the larger, then earlier, part.
fn largest_splittable(parts: &[Part]) -> Option<usize> {
    (0..parts.len())
        .filter(|&i| parts[i].members.len() >= 2)
        .max_by(|&a, &b| {
            parts[a]
                .error
                .total_cmp(&parts[b].error)
                .then(parts[a].members.len().cmp(&parts[b].members.len()))
                .then(b.cmp(&a))
        })
}

/// Strength-weighted 2-means with seeded k-means++ initialization. Falls
/// back to an index split when the members cannot be separated.
fn two_means(part: &Part, embedding: &Embedding, weight: &[f64], metric: Metric, rng: &mut Rng) -> (Part, Part) {
    let members = &part.members;
    let w = |v: usize| if part.mass > 0.0 { weight[v] } else { 1.0 };
    let pick = |rng: &mut Rng, score: &dyn Fn(usize) -> f64| -> Option<usize> {
        let total: f64 = members.iter().map(|&v| score(v)).sum();
        if !(total > 0.0) {
            return None;
        }
        let mut r = rng.random::<f64>() * total;
        for &v in members {
            r -= score(v);
            if r < 0.0 {
                return Some(v);
            }
        }
        members.iter().rev().copied().find(|&v| score(v) > 0.0)
    };
    let halves = || {
        let (a, b) = members.split_at(members.len() / 2);
        (
            Part::new(a.to_vec(), embedding, weight, metric),
            Part::new(b.to_vec(), embedding, weight, metric),
        )
    };
    let first = pick(rng, &|v| w(v)).expect("part has positive total weight");
    let c0 = embedding.row(first).to_vec();
    let Some(second) = pick(rng, &|v| w(v) * sq_dist(&c0, embedding.row(v))) else {
        return halves();
    };
    let mut centers = [c0, embedding.row(second).to_vec()];
    let mut assign = vec![0u8; members.len()];
    for round in 0..LLOYD_ROUNDS {
        let mut changed = round == 0;
        for (a, &v) in assign.iter_mut().zip(members) {
            let x = embedding.row(v);
            let side = u8::from(sq_dist(&centers[1], x) < sq_dist(&centers[0], x));
            if side != *a {
                *a = side;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let k = embedding.dim();
        let mut sums = [vec![0.0; k], vec![0.0; k]];
        let mut mass = [0.0; 2];
        for (&a, &v) in assign.iter().zip(members) {
            let a = a as usize;
            mass[a] += w(v);
            for (s, x) in sums[a].iter_mut().zip(embedding.row(v)) {
                *s += w(v) * x;
            }
        }
        for a in 0..2 {
            if mass[a] > 0.0 {
                centers[a] = sums[a].iter().map(|s| s / mass[a]).collect();
            }
        }
    }
    let (left, right): (Vec<_>, Vec<_>) = members.iter().zip(&assign).partition(|(_, &a)| a == 0);
    if left.is_empty() || right.is_empty() {
        return halves();
    }
    (
        Part::new(left.into_iter().map(|(&v, _)| v).collect(), embedding, weight, metric),
        Part::new(right.into_iter().map(|(&v, _)| v).collect(), embedding, weight, metric),
    )
}

fn landmark_search(
    graph: &Graph,
    embedding: &Embedding,
    partition: &Partition,
    config: &LandmarkConfig,
    options: &SearchOptions,
    global: bool,
    local: bool,
) -> Result<SearchOutcome> {
    let set = refine_partition(graph, embedding, partition, config, &options.gcl)?;
    let sample = local
        .then(|| sample_pairs(graph, options.auc_samples, options.seed))
        .transpose()?;
    search(
        &Backend::Landmark(&set),
        graph,
        global.then_some(partition),
        sample.as_ref(),
        options,
    )
}

/// Global score with the model fitted on landmarks.
pub fn approx_global_score(
    graph: &Graph,
    embedding: &Embedding,
    partition: &Partition,
    config: &LandmarkConfig,
    options: &SearchOptions,
) -> Result<GlobalScoreResult> {
    let outcome = landmark_search(graph, embedding, partition, config, options, true, false)?;
    Ok(outcome.global.expect("global criterion requested"))
}

/// Local score from inherited node weights and true distances.
pub fn approx_local_score(
    graph: &Graph,
    embedding: &Embedding,
    partition: &Partition,
    config: &LandmarkConfig,
    options: &SearchOptions,
) -> Result<LocalScoreResult> {
    let outcome = landmark_search(graph, embedding, partition, config, options, false, true)?;
    Ok(outcome.local.expect("local criterion requested"))
}
