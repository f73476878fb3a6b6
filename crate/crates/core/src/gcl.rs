//! Geometric Chung-Lu null model.
//!
//! A directed edge `i -> j` appears with probability
//! `x_out[i] * x_in[j] * g(d_ij)`, where `g` is a normalized power kernel of
//! the embedding distance and the weights are fitted so that every node's
//! expected in- and out-degree matches the graph. Undirected graphs use a
//! single weight per node.
//!
//! The loops variant adds a self term `x_out[i] * x_in[i] * g(d_ii)` to each
//! node's degree equation; landmark graphs use it.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixed_point;
use crate::graph::{Embedding, Graph, Partition};

/// Rows above this size are recomputed on demand instead of cached densely.
const DENSE_LIMIT: usize = 4096;
/// Row counts from which matrix-vector products run on the rayon pool.
const PARALLEL_ROWS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
    Manhattan,
}

impl Metric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            Metric::Manhattan => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" | "euclidean" => Ok(Metric::Euclidean),
            "l1" | "manhattan" => Ok(Metric::Manhattan),
            other => Err(Error::InvalidArgument(format!("unknown metric {other:?}"))),
        }
    }
}

/// `g(d) = ((d_max - d) / (d_max - d_min))^alpha`, optionally with the
/// normalized distance clipped to `[lo, hi]` first.
///
/// When every pair sits at the same distance (`d_min == d_max > 0`) the
/// kernel is constant 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceKernel {
    pub alpha: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub clip: Option<(f64, f64)>,
}

impl DistanceKernel {
    pub fn new(alpha: f64, d_min: f64, d_max: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be >= 0, got {alpha}")));
        }
        if !(d_min >= 0.0 && d_max >= d_min && d_max > 0.0 && d_max.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "invalid distance range [{d_min}, {d_max}]"
            )));
        }
        Ok(DistanceKernel {
            alpha,
            d_min,
            d_max,
            clip: None,
        })
    }

    pub fn with_clip(mut self, clip: Option<(f64, f64)>) -> Result<Self> {
        if let Some((lo, hi)) = clip {
            if !(0.0 <= lo && lo < hi && hi <= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "clip range must satisfy 0 <= lo < hi <= 1, got ({lo}, {hi})"
                )));
            }
        }
        self.clip = clip;
        Ok(self)
    }

    /// Normalized distance `(d - d_min) / (d_max - d_min)`, clipped if
    /// configured. Does not check the domain.
    pub fn normalized(&self, d: f64) -> f64 {
        let span = self.d_max - self.d_min;
        let t = if span > 0.0 {
            ((d - self.d_min) / span).clamp(0.0, 1.0)
        } else {
            0.0
        };
        match self.clip {
            Some((lo, hi)) => t.clamp(lo, hi),
            None => t,
        }
    }

    pub fn eval(&self, d: f64) -> Result<f64> {
        if !(d >= self.d_min && d <= self.d_max) {
            return Err(Error::DistanceOutOfRange {
                d,
                lo: self.d_min,
                hi: self.d_max,
            });
        }
        Ok(self.at_normalized(self.normalized(d)))
    }

    /// Evaluates with `d` clamped into `[d_min, d_max]`.
    pub fn eval_clamped(&self, d: f64) -> f64 {
        self.at_normalized(self.normalized(d))
    }

    fn at_normalized(&self, t: f64) -> f64 {
        // powf(0, 0) == 1, which is the convention for alpha = 0 at d_max.
        (1.0 - t).powf(self.alpha)
    }
}

/// Exact minimum over distinct pairs and maximum over all pairs.
pub fn distance_extremes(embedding: &Embedding, metric: Metric) -> Result<(f64, f64)> {
    let n = embedding.n();
    let (lo, hi) = (0..n)
        .into_par_iter()
        .map(|i| {
            let a = embedding.row(i);
            let mut lo = f64::INFINITY;
            let mut hi = 0.0_f64;
            for j in i + 1..n {
                let d = metric.distance(a, embedding.row(j));
                lo = lo.min(d);
                hi = hi.max(d);
            }
            (lo, hi)
        })
        .reduce(
            || (f64::INFINITY, 0.0),
            |a, b| (a.0.min(b.0), a.1.max(b.1)),
        );
    if hi <= 0.0 {
        return Err(Error::DegenerateEmbedding(
            "all points coincide (d_max = d_min)".into(),
        ));
    }
    Ok((lo, hi))
}

/// Precomputed normalized distances for one embedding, shared by every
/// fit along an alpha search.
#[derive(Debug)]
pub struct Geometry {
    points: Embedding,
    metric: Metric,
    d_min: f64,
    d_max: f64,
    clip: Option<(f64, f64)>,
    loop_distances: Option<Vec<f64>>,
    // Row-major clipped normalized distances; diagonal holds loop terms.
    normalized: Option<Vec<f64>>,
}

impl Geometry {
    /// Kernel range from the exact distance extremes of `points`.
    pub fn new(points: Embedding, metric: Metric, clip: Option<(f64, f64)>) -> Result<Self> {
        let (d_min, d_max) = distance_extremes(&points, metric)?;
        Geometry::with_bounds(points, metric, d_min, d_max, clip, None)
    }

    /// Explicit kernel range; distances outside it are clamped. Loop
    /// distances enable the self-loop term.
    pub fn with_bounds(
        points: Embedding,
        metric: Metric,
        d_min: f64,
        d_max: f64,
        clip: Option<(f64, f64)>,
        loop_distances: Option<Vec<f64>>,
    ) -> Result<Self> {
        DistanceKernel::new(0.0, d_min, d_max)?.with_clip(clip)?;
        if let Some(l) = &loop_distances {
            if l.len() != points.n() {
                return Err(Error::LengthMismatch {
                    left: l.len(),
                    right: points.n(),
                });
            }
        }
        let mut geometry = Geometry {
            points,
            metric,
            d_min,
            d_max,
            clip,
            loop_distances,
            normalized: None,
        };
        let n = geometry.n();
        if n <= DENSE_LIMIT {
            let mut dense = vec![0.0; n * n];
            dense.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
                for (j, t) in row.iter_mut().enumerate() {
                    *t = geometry.compute_normalized(i, j);
                }
            });
            geometry.normalized = Some(dense);
        }
        Ok(geometry)
    }

    pub fn n(&self) -> usize {
        self.points.n()
    }

    pub fn points(&self) -> &Embedding {
        &self.points
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn d_min(&self) -> f64 {
        self.d_min
    }

    pub fn d_max(&self) -> f64 {
        self.d_max
    }

    pub fn has_loops(&self) -> bool {
        self.loop_distances.is_some()
    }

    pub fn loop_distances(&self) -> Option<&[f64]> {
        self.loop_distances.as_deref()
    }

    pub fn kernel(&self, alpha: f64) -> Result<DistanceKernel> {
        DistanceKernel::new(alpha, self.d_min, self.d_max)?.with_clip(self.clip)
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.loop_distances.as_ref().map_or(0.0, |l| l[i]);
        }
        self.metric.distance(self.points.row(i), self.points.row(j))
    }

    fn compute_normalized(&self, i: usize, j: usize) -> f64 {
        // Only the range and clip matter here; alpha is irrelevant.
        let k = DistanceKernel {
            alpha: 0.0,
            d_min: self.d_min,
            d_max: self.d_max,
            clip: self.clip,
        };
        k.normalized(self.distance(i, j))
    }

    fn normalized_at(&self, i: usize, j: usize) -> f64 {
        match &self.normalized {
            Some(dense) => dense[i * self.n() + j],
            None => self.compute_normalized(i, j),
        }
    }

    /// Kernel value for the pair; zero on the diagonal unless loops are on.
    pub fn kernel_value(&self, alpha: f64, i: usize, j: usize) -> f64 {
        if i == j && !self.has_loops() {
            return 0.0;
        }
        (1.0 - self.normalized_at(i, j)).powf(alpha)
    }

    fn kernel_matrix(&self, alpha: f64) -> KernelMatrix<'_> {
        let n = self.n();
        let dense = self.normalized.as_ref().map(|t| {
            let mut g = vec![0.0; n * n];
            g.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = if i == j && !self.has_loops() {
                        0.0
                    } else {
                        (1.0 - t[i * n + j]).powf(alpha)
                    };
                }
            });
            g
        });
        KernelMatrix {
            geometry: self,
            alpha,
            dense,
        }
    }
}

struct KernelMatrix<'a> {
    geometry: &'a Geometry,
    alpha: f64,
    dense: Option<Vec<f64>>,
}

impl KernelMatrix<'_> {
    fn n(&self) -> usize {
        self.geometry.n()
    }

    fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let n = self.n();
        match &self.dense {
            Some(g) => g[i * n..(i + 1) * n].iter().zip(x).map(|(a, b)| a * b).sum(),
            None => (0..n)
                .map(|j| self.geometry.kernel_value(self.alpha, i, j) * x[j])
                .sum(),
        }
    }

    /// `G x`; the kernel is symmetric so this also serves as `G^T x`.
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        if self.n() >= PARALLEL_ROWS {
            out.par_iter_mut()
                .enumerate()
                .for_each(|(i, o)| *o = self.row_dot(i, x));
        } else {
            for (i, o) in out.iter_mut().enumerate() {
                *o = self.row_dot(i, x);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Degeneracy {
    /// One node is an endpoint of every edge.
    Star { center: usize },
    /// Only two nodes carry edges.
    TwoNodes { a: usize, b: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feasibility {
    Feasible,
    Degenerate(Degeneracy),
}

/// Classifies a degree system: unique weights exist iff, for every node,
/// its total degree is strictly below the total edge mass.
pub fn check_feasibility(graph: &Graph) -> Feasibility {
    classify_degrees(graph.w_out(), graph.w_in())
}

fn classify_degrees(w_out: &[f64], w_in: &[f64]) -> Feasibility {
    let active: Vec<usize> = (0..w_out.len())
        .filter(|&i| w_out[i] + w_in[i] > 0.0)
        .collect();
    if active.len() == 2 {
        return Feasibility::Degenerate(Degeneracy::TwoNodes {
            a: active[0],
            b: active[1],
        });
    }
    let total: f64 = w_out.iter().sum();
    let slack = 1e-12 * total;
    for &j in &active {
        if w_out[j] + w_in[j] >= total - slack {
            return Feasibility::Degenerate(Degeneracy::Star { center: j });
        }
    }
    Feasibility::Feasible
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Maximum relative degree error `|expected - w| / max(w, 1)`.
    pub tol: f64,
    pub max_iter: usize,
    /// Step size of the damped fixed-point update, in `(0, 1]`.
    pub damping: f64,
    /// Anderson mixing window over the fixed-point map; 0 disables it.
    pub anderson: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tol: 1e-8,
            max_iter: 2000,
            damping: 0.8,
            anderson: 8,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GclConfig {
    pub metric: Metric,
    pub clip: Option<(f64, f64)>,
    pub fit: FitOptions,
}

/// Fitted node weights. For undirected models `x_in == x_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub x_out: Vec<f64>,
    pub x_in: Vec<f64>,
}

impl Weights {
    /// `w / sqrt(W)`, exact for the classical model with loops.
    pub fn initial(w_out: &[f64], w_in: &[f64]) -> Self {
        let total: f64 = w_out.iter().sum();
        let s = total.sqrt();
        Weights {
            x_out: w_out.iter().map(|w| w / s).collect(),
            x_in: w_in.iter().map(|w| w / s).collect(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Weights {
            x_out: self.x_out.iter().map(|x| x * factor).collect(),
            x_in: self.x_in.iter().map(|x| x * factor).collect(),
        }
    }
}

/// Edge probabilities fixed by the degree sequence alone.
#[derive(Debug, Clone, PartialEq)]
pub struct DeterministicP {
    pub kind: Degeneracy,
    // (src, dst, p) sorted by (src, dst); both orientations for undirected.
    entries: Vec<(usize, usize, f64)>,
}

impl DeterministicP {
    fn from_degrees(kind: Degeneracy, w_out: &[f64], w_in: &[f64], directed: bool) -> Self {
        let mut entries = Vec::new();
        let mut push = |s: usize, t: usize, p: f64| {
            if p > 0.0 {
                entries.push((s, t, p));
            }
        };
        match kind {
            Degeneracy::TwoNodes { a, b } => {
                push(a, b, w_out[a]);
                push(b, a, w_out[b]);
            }
            Degeneracy::Star { center } => {
                for j in (0..w_out.len()).filter(|&j| j != center) {
                    if directed {
                        push(center, j, w_in[j]);
                        push(j, center, w_out[j]);
                    } else {
                        push(center, j, w_out[j]);
                        push(j, center, w_out[j]);
                    }
                }
            }
        }
        entries.sort_by_key(|&(s, t, _)| (s, t));
        DeterministicP { kind, entries }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries
            .binary_search_by_key(&(i, j), |&(s, t, _)| (s, t))
            .map_or(0.0, |k| self.entries[k].2)
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }
}

#[derive(Debug, Clone)]
pub struct GclModel {
    geometry: Arc<Geometry>,
    kernel: DistanceKernel,
    directed: bool,
    x_out: Vec<f64>,
    x_in: Vec<f64>,
    deterministic: Option<DeterministicP>,
    fit_residual: f64,
    iterations: usize,
}

impl GclModel {
    pub fn kernel(&self) -> &DistanceKernel {
        &self.kernel
    }

    pub fn alpha(&self) -> f64 {
        self.kernel.alpha
    }

    pub fn geometry(&self) -> &Arc<Geometry> {
        &self.geometry
    }

    pub fn n(&self) -> usize {
        self.geometry.n()
    }

    pub fn directed(&self) -> bool {
        self.directed
    }

    pub fn x_out(&self) -> &[f64] {
        &self.x_out
    }

    pub fn x_in(&self) -> &[f64] {
        &self.x_in
    }

    pub fn weights(&self) -> Weights {
        Weights {
            x_out: self.x_out.clone(),
            x_in: self.x_in.clone(),
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.deterministic.is_some()
    }

    pub fn deterministic_p(&self) -> Option<&DeterministicP> {
        self.deterministic.as_ref()
    }

    pub fn fit_residual(&self) -> f64 {
        self.fit_residual
    }

    /// Fixed-point sweeps performed; zero for degenerate graphs.
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Raw `x_out[i] x_in[j] g(d_ij)`; may exceed 1.
    pub fn p(&self, i: usize, j: usize) -> f64 {
        match &self.deterministic {
            Some(det) => det.get(i, j),
            None => {
                if self.x_out[i] == 0.0 || self.x_in[j] == 0.0 {
                    return 0.0;
                }
                self.x_out[i] * self.x_in[j] * self.geometry.kernel_value(self.kernel.alpha, i, j)
            }
        }
    }

    pub fn p_clamped(&self, i: usize, j: usize) -> f64 {
        self.p(i, j).min(1.0)
    }

    /// Expected (out, in) degree of every node under the unclamped model.
    pub fn expected_degrees(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n();
        let rows: Vec<(f64, f64)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let out: f64 = (0..n).map(|j| self.p(i, j)).sum();
                let inn: f64 = (0..n).map(|j| self.p(j, i)).sum();
                (out, inn)
            })
            .collect();
        rows.into_iter().unzip()
    }
}

/// Fits the model for one alpha, handling degenerate degree sequences.
pub fn fit(
    graph: &Graph,
    geometry: &Arc<Geometry>,
    alpha: f64,
    options: &FitOptions,
    init: Option<&Weights>,
) -> Result<GclModel> {
    if geometry.n() != graph.n() {
        return Err(Error::LengthMismatch {
            left: geometry.n(),
            right: graph.n(),
        });
    }
    fit_degrees(
        graph.w_out(),
        graph.w_in(),
        graph.directed(),
        geometry,
        alpha,
        options,
        init,
    )
}

/// Convenience wrapper: builds the geometry for `embedding` and fits.
pub fn fit_embedding(
    graph: &Graph,
    embedding: &Embedding,
    alpha: f64,
    config: &GclConfig,
) -> Result<GclModel> {
    let geometry = Arc::new(Geometry::new(embedding.clone(), config.metric, config.clip)?);
    fit(graph, &geometry, alpha, &config.fit, None)
}

/// Fits weights to explicit degree vectors. Degenerate sequences (two
/// active nodes, or a star) are resolved analytically unless the geometry
/// carries loops, where the system is always solvable.
pub fn fit_degrees(
    w_out: &[f64],
    w_in: &[f64],
    directed: bool,
    geometry: &Arc<Geometry>,
    alpha: f64,
    options: &FitOptions,
    init: Option<&Weights>,
) -> Result<GclModel> {
    let n = geometry.n();
    if w_out.len() != n || w_in.len() != n {
        return Err(Error::LengthMismatch {
            left: w_out.len(),
            right: n,
        });
    }
    if !(options.damping > 0.0 && options.damping <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "damping must lie in (0, 1], got {}",
            options.damping
        )));
    }
    let kernel = geometry.kernel(alpha)?;
    if !geometry.has_loops() {
        if let Feasibility::Degenerate(kind) = classify_degrees(w_out, w_in) {
            return Ok(GclModel {
                geometry: Arc::clone(geometry),
                kernel,
                directed,
                x_out: vec![0.0; n],
                x_in: vec![0.0; n],
                deterministic: Some(DeterministicP::from_degrees(kind, w_out, w_in, directed)),
                fit_residual: 0.0,
                iterations: 0,
            });
        }
    }

    let matrix = geometry.kernel_matrix(alpha);
    let start = match init {
        Some(w) => {
            if w.x_out.len() != n || w.x_in.len() != n {
                return Err(Error::LengthMismatch {
                    left: w.x_out.len(),
                    right: n,
                });
            }
            w.clone()
        }
        None => Weights::initial(w_out, w_in),
    };
    let apply = |x: &[f64], out: &mut [f64]| matrix.apply(x, out);
    let (mut weights, residual, iterations) = if directed {
        fixed_point::solve_directed(apply, w_out, w_in, start, options)?
    } else {
        fixed_point::solve_undirected(apply, w_out, start, options)?
    };
    if directed {
        fix_gauge(&mut weights);
    }
    Ok(GclModel {
        geometry: Arc::clone(geometry),
        kernel,
        directed,
        x_out: weights.x_out,
        x_in: weights.x_in,
        deterministic: None,
        fit_residual: residual,
        iterations,
    })
}

/// Scales `x_out` so its first positive entry is 1, `x_in` inversely.
fn fix_gauge(w: &mut Weights) {
    if let Some(first) = w.x_out.iter().position(|&x| x > 0.0) {
        let c = w.x_out[first];
        w.x_out.iter_mut().for_each(|v| *v /= c);
        w.x_in.iter_mut().for_each(|v| *v *= c);
    }
}

/// Expected edge mass between groups, `mass[a * groups + b]` for ordered
/// group pairs, normalized to sum to 1. Probabilities above 1 are clamped
/// and counted. Loop terms count toward the node's own group.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMass {
    pub groups: usize,
    pub mass: Vec<f64>,
    pub clamped: usize,
}

impl BlockMass {
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.mass[a * self.groups + b]
    }
}

/// Block masses over a community partition of the model's nodes.
pub fn expected_block_mass(model: &GclModel, partition: &Partition) -> Result<BlockMass> {
    if partition.n() != model.n() {
        return Err(Error::LengthMismatch {
            left: partition.n(),
            right: model.n(),
        });
    }
    Ok(grouped_block_mass(model, partition.labels(), partition.count(), None))
}

/// `sizes` marks the model's nodes as aggregates (landmarks) of that many
/// graph nodes: a pair's value is then an expected edge count, capped at
/// the number of node pairs it stands for instead of at 1.
pub(crate) fn grouped_block_mass(
    model: &GclModel,
    group_of: &[usize],
    groups: usize,
    sizes: Option<&[usize]>,
) -> BlockMass {
    let n = model.n();
    let cap = |i: usize, j: usize| match sizes {
        None => 1.0,
        Some(s) if i == j => (s[i] * s[i].saturating_sub(1)) as f64,
        Some(s) => (s[i] * s[j]) as f64,
    };
    let mut mass = vec![0.0; groups * groups];
    let mut clamped = 0;
    if let Some(det) = model.deterministic_p() {
        for &(s, t, p) in det.entries() {
            let c = cap(s, t);
            if p > c {
                clamped += 1;
            }
            mass[group_of[s] * groups + group_of[t]] += p.min(c);
        }
    } else {
        let loops = model.geometry().has_loops();
        // Per-row partial sums, reduced in node order for determinism.
        let rows: Vec<(Vec<f64>, usize)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut acc = vec![0.0; groups];
                let mut clamped = 0;
                if model.x_out[i] > 0.0 {
                    for j in 0..n {
                        if i == j && !loops {
                            continue;
                        }
                        let (p, c) = (model.p(i, j), cap(i, j));
                        if p > c {
                            clamped += 1;
                        }
                        acc[group_of[j]] += p.min(c);
                    }
                }
                (acc, clamped)
            })
            .collect();
        for (i, (acc, c)) in rows.into_iter().enumerate() {
            let a = group_of[i];
            for (b, v) in acc.into_iter().enumerate() {
                mass[a * groups + b] += v;
            }
            clamped += c;
        }
    }
    let total: f64 = mass.iter().sum();
    if total > 0.0 {
        mass.iter_mut().for_each(|m| *m /= total);
    }
    BlockMass {
        groups,
        mass,
        clamped,
    }
}
