//! Density-based (global) score: how well the null model's expected edge
//! mass between and within communities matches the graph's.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gcl::{grouped_block_mass, BlockMass, GclModel, Geometry};
use crate::graph::{check_aligned, Embedding, Graph, Partition};
use crate::search::{search, Backend, SearchOptions};

/// Block masses flattened as `(c12, c21, c13, c31, ..., c(l-1)l, cl(l-1))`
/// followed by the diagonal `(c1, ..., cl)`. Undirected vectors carry one
/// entry per unordered pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityVector {
    pub entries: Vec<f64>,
    /// Number of leading off-diagonal entries.
    pub external: usize,
}

impl DensityVector {
    /// Flattens an `l x l` ordered-pair mass matrix.
    pub fn from_blocks(mass: &[f64], l: usize, directed: bool) -> Self {
        let mut entries = Vec::with_capacity(l * l);
        for i in 0..l {
            for j in i + 1..l {
                if directed {
                    entries.push(mass[i * l + j]);
                    entries.push(mass[j * l + i]);
                } else {
                    entries.push(mass[i * l + j] + mass[j * l + i]);
                }
            }
        }
        let external = entries.len();
        entries.extend((0..l).map(|i| mass[i * l + i]));
        let total: f64 = entries.iter().sum();
        if total > 0.0 {
            entries.iter_mut().for_each(|e| *e /= total);
        }
        DensityVector { entries, external }
    }

    pub fn from_block_mass(block: &BlockMass, directed: bool) -> Self {
        DensityVector::from_blocks(&block.mass, block.groups, directed)
    }

    pub fn external_part(&self) -> &[f64] {
        &self.entries[..self.external]
    }

    pub fn internal_part(&self) -> &[f64] {
        &self.entries[self.external..]
    }
}

/// Proportion of edge weight between and within communities.
pub fn graph_density_vector(graph: &Graph, partition: &Partition) -> Result<DensityVector> {
    check_aligned(graph, None, Some(partition))?;
    let l = partition.count();
    let mut mass = vec![0.0; l * l];
    for e in graph.edges() {
        mass[partition.label(e.src) * l + partition.label(e.dst)] += e.weight;
    }
    Ok(DensityVector::from_blocks(&mass, l, graph.directed()))
}

/// Expected proportions under a fitted model.
pub fn model_density_vector(model: &GclModel, partition: &Partition) -> Result<DensityVector> {
    if partition.n() != model.n() {
        return Err(Error::LengthMismatch {
            left: partition.n(),
            right: model.n(),
        });
    }
    let block = grouped_block_mass(model, partition.labels(), partition.count(), None);
    Ok(DensityVector::from_block_mass(&block, model.directed()))
}

fn entropy_bits(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.log2())
        .sum::<f64>()
}

/// Jensen-Shannon divergence in bits, so the value lies in `[0, 1]`.
pub fn jsd(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| (a + b) / 2.0).collect();
    let d = entropy_bits(&m) - (entropy_bits(p) + entropy_bits(q)) / 2.0;
    Ok(d.clamp(0.0, 1.0))
}

fn renormalized(v: &[f64]) -> Option<Vec<f64>> {
    let total: f64 = v.iter().sum();
    (total > 0.0).then(|| v.iter().map(|x| x / total).collect())
}

/// Mean of the divergences of the renormalized external and internal
/// parts. A part with no mass on one side only counts as fully divergent.
pub fn split_jsd(c: &DensityVector, b: &DensityVector) -> Result<f64> {
    let part = |x: &[f64], y: &[f64]| -> Result<f64> {
        match (renormalized(x), renormalized(y)) {
            (Some(x), Some(y)) => jsd(&x, &y),
            (None, None) => Ok(0.0),
            _ => Ok(1.0),
        }
    };
    if c.external != b.external || c.entries.len() != b.entries.len() {
        return Err(Error::LengthMismatch {
            left: c.entries.len(),
            right: b.entries.len(),
        });
    }
    Ok(0.5 * (part(c.external_part(), b.external_part())? + part(c.internal_part(), b.internal_part())?))
}

pub(crate) fn divergence(c: &DensityVector, b: &DensityVector, split: bool) -> Result<f64> {
    if split {
        split_jsd(c, b)
    } else {
        jsd(&c.entries, &b.entries)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalScoreResult {
    pub score: f64,
    pub best_alpha: f64,
    /// `(alpha, divergence)` for every alpha that fitted.
    pub curve: Vec<(f64, f64)>,
    /// Alpha values whose fit failed.
    pub failed_alphas: Vec<f64>,
    /// Model probabilities above 1 clamped at the best alpha.
    pub clamped_pairs: usize,
}

/// Exact global score: grid search over alpha of the JSD between the graph
/// and model density vectors.
pub fn global_score(
    graph: &Graph,
    embedding: &Embedding,
    partition: &Partition,
    options: &SearchOptions,
) -> Result<GlobalScoreResult> {
    check_aligned(graph, Some(embedding), Some(partition))?;
    let geometry = Arc::new(Geometry::new(
        embedding.clone(),
        options.gcl.metric,
        options.gcl.clip,
    )?);
    let outcome = search(&Backend::Exact(geometry), graph, Some(partition), None, options)?;
    Ok(outcome.global.expect("global criterion requested"))
}
