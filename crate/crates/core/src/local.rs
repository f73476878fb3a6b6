//! Link-based (local) score: sampled AUC of the model's edge
//! probabilities as a predictor of the graph's edges.

use std::sync::Arc;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gcl::{GclModel, Geometry};
use crate::graph::{check_aligned, Embedding, Graph};
use crate::rng::seeded;
use crate::search::{search, Backend, SearchOptions};

/// Probabilities this close (relative) are treated as equal.
pub const TIE_TOLERANCE: f64 = 1e-12;

const Z95: f64 = 1.96;

/// Positive and negative ordered pairs drawn once and reused for every
/// alpha.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSample {
    /// `(src, dst, weight)` of sampled edges.
    pub positives: Vec<(usize, usize, f64)>,
    pub negatives: Vec<(usize, usize)>,
    pub seed: u64,
    pub k: usize,
}

/// Uniform sampling with replacement of `k` edges and `k` ordered
/// non-adjacent pairs. Undirected edges get a random orientation.
pub fn sample_pairs(graph: &Graph, k: usize, seed: u64) -> Result<PairSample> {
    if k == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    if graph.edge_count() == 0 {
        return Err(Error::EmptyGraph);
    }
    let n = graph.n();
    let arcs = if graph.directed() {
        graph.edge_count()
    } else {
        2 * graph.edge_count()
    };
    if arcs >= n * (n - 1) {
        return Err(Error::NoNegatives);
    }
    let mut rng = seeded(seed);
    let edges = graph.edges();
    let positives = (0..k)
        .map(|_| {
            let e = edges[rng.random_range(0..edges.len())];
            if !graph.directed() && rng.random::<bool>() {
                (e.dst, e.src, e.weight)
            } else {
                (e.src, e.dst, e.weight)
            }
        })
        .collect();
    let cap = 100 * k;
    let mut negatives = Vec::with_capacity(k);
    let mut attempts = 0;
    while negatives.len() < k {
        if attempts == cap {
            return Err(Error::NegativeSamplingExhausted { attempts });
        }
        attempts += 1;
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u != v && !graph.has_edge(u, v) {
            negatives.push((u, v));
        }
    }
    Ok(PairSample {
        positives,
        negatives,
        seed,
        k,
    })
}

/// Twice the comparison indicator: 2 win, 1 tie, 0 loss.
fn compare(pos: f64, neg: f64) -> u8 {
    if (pos - neg).abs() <= TIE_TOLERANCE * pos.abs().max(neg.abs()) {
        1
    } else if pos > neg {
        2
    } else {
        0
    }
}

/// AUC estimate and 95% CI half-width for an arbitrary pair scorer.
pub fn auc_with(prob: impl Fn(usize, usize) -> f64 + Sync, sample: &PairSample, weighted: bool) -> (f64, f64) {
    let k = sample.positives.len().min(sample.negatives.len());
    let marks: Vec<u8> = (0..k)
        .into_par_iter()
        .map(|i| {
            let (s, t, _) = sample.positives[i];
            let (u, v) = sample.negatives[i];
            compare(prob(s, t), prob(u, v))
        })
        .collect();
    let p_hat = if weighted {
        // Scaling by w / mean(w) and averaging over k is a weight-share sum.
        let total: f64 = sample.positives[..k].iter().map(|p| p.2).sum();
        let won: f64 = marks.iter().zip(&sample.positives).map(|(&m, p)| m as f64 * p.2).sum();
        (won / (2.0 * total)).min(1.0)
    } else {
        marks.iter().map(|&m| m as u64).sum::<u64>() as f64 / (2 * k) as f64
    };
    let ci = Z95 * (p_hat * (1.0 - p_hat)).max(0.0).sqrt() / (k as f64).sqrt();
    (p_hat, ci)
}

/// `(p_hat, ci_halfwidth)` for a fitted model.
pub fn auc_estimate(model: &GclModel, sample: &PairSample, weighted: bool) -> (f64, f64) {
    auc_with(|u, v| model.p(u, v), sample, weighted)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalScoreResult {
    /// One minus the best AUC.
    pub score: f64,
    pub best_alpha: f64,
    pub auc: f64,
    pub ci_halfwidth: f64,
    /// `(alpha, auc)` for every alpha that fitted.
    pub curve: Vec<(f64, f64)>,
    pub failed_alphas: Vec<f64>,
}

/// Exact local score over the alpha grid with one shared pair sample.
pub fn local_score(graph: &Graph, embedding: &Embedding, options: &SearchOptions) -> Result<LocalScoreResult> {
    check_aligned(graph, Some(embedding), None)?;
    let sample = sample_pairs(graph, options.auc_samples, options.seed)?;
    let geometry = Arc::new(Geometry::new(
        embedding.clone(),
        options.gcl.metric,
        options.gcl.clip,
    )?);
    let outcome = search(&Backend::Exact(geometry), graph, None, Some(&sample), options)?;
    Ok(outcome.local.expect("local criterion requested"))
}
