//! Batch evaluation of several embeddings of one graph, the combined
//! score, and the JSON/CSV report.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{ecg, louvain, ECG_ENSEMBLE_SIZE};
use crate::error::{Error, Result};
use crate::gcl::Geometry;
use crate::global::GlobalScoreResult;
use crate::graph::{check_aligned, Embedding, Graph, Partition};
use crate::landmarks::{refine_partition, LandmarkConfig, LANDMARK_THRESHOLD};
use crate::local::{sample_pairs, LocalScoreResult, PairSample, TIE_TOLERANCE};
use crate::search::{search, Backend, SearchOptions};

pub const SCHEMA_VERSION: u32 = 1;

/// Min-normalized convex combination of the two scores:
/// `q (g + eps) / min(g + eps) + (1 - q) (l + eps) / min(l + eps)`.
pub fn combine(globals: &[f64], locals: &[f64], q: f64, eps: f64) -> Result<Vec<f64>> {
    if globals.len() != locals.len() {
        return Err(Error::LengthMismatch {
            left: globals.len(),
            right: locals.len(),
        });
    }
    if globals.is_empty() {
        return Err(Error::InvalidArgument("nothing to combine".into()));
    }
    if !(0.0..=1.0).contains(&q) || !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need 0 <= q <= 1 and eps > 0, got q={q}, eps={eps}"
        )));
    }
    let (ng, nl) = (normalize(globals, eps), normalize(locals, eps));
    Ok(ng.iter().zip(&nl).map(|(g, l)| q * g + (1.0 - q) * l).collect())
}

/// `(x + eps) / min(x + eps)`.
fn normalize(xs: &[f64], eps: f64) -> Vec<f64> {
    let min = xs.iter().map(|x| x + eps).fold(f64::INFINITY, f64::min);
    xs.iter().map(|x| (x + eps) / min).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Landmarks from `LANDMARK_THRESHOLD` nodes up.
    #[default]
    Auto,
    Exact,
    Landmark,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Clusterer {
    Louvain,
    Ecg,
}

impl std::str::FromStr for Clusterer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "louvain" => Ok(Clusterer::Louvain),
            "ecg" => Ok(Clusterer::Ecg),
            other => Err(Error::InvalidArgument(format!("unknown clusterer {other:?}"))),
        }
    }
}

/// ECG for unweighted graphs, Louvain for weighted ones, unless chosen.
pub fn cluster(graph: &Graph, clusterer: Option<Clusterer>, seed: u64) -> Result<(Partition, Clusterer)> {
    let which = clusterer.unwrap_or(if graph.weighted() {
        Clusterer::Louvain
    } else {
        Clusterer::Ecg
    });
    let partition = match which {
        Clusterer::Louvain => louvain(graph, seed),
        Clusterer::Ecg => ecg(graph, ECG_ENSEMBLE_SIZE, seed)?,
    };
    Ok((partition, which))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateOptions {
    pub search: SearchOptions,
    pub landmarks: LandmarkConfig,
    pub mode: Mode,
    pub q: f64,
    pub eps: f64,
}

impl Default for EvaluateOptions {
    fn default() -> Self {
        EvaluateOptions {
            search: SearchOptions::default(),
            landmarks: LandmarkConfig::default(),
            mode: Mode::Auto,
            q: 0.5,
            eps: 0.01,
        }
    }
}

impl EvaluateOptions {
    pub fn uses_landmarks(&self, n: usize) -> bool {
        match self.mode {
            Mode::Auto => n >= LANDMARK_THRESHOLD,
            Mode::Exact => false,
            Mode::Landmark => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub fit_failures: usize,
    pub failed_alphas: Vec<f64>,
    /// Node-pair probabilities above 1 clamped at the best global alpha.
    pub clamped_pairs: usize,
    pub landmark_mode: bool,
    pub landmarks: Option<usize>,
    pub seed: u64,
    pub jsd_base: u32,
    pub grid_step: f64,
    pub max_fit_iterations: usize,
    pub max_fit_residual: f64,
    pub last_fit_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingReport {
    pub name: String,
    pub error: Option<String>,
    pub global: Option<GlobalScoreResult>,
    pub local: Option<LocalScoreResult>,
    pub normalized_global: Option<f64>,
    pub normalized_local: Option<f64>,
    pub combined: Option<f64>,
    pub diagnostics: Option<Diagnostics>,
}

impl EmbeddingReport {
    fn failed(name: &str, error: String) -> Self {
        EmbeddingReport {
            name: name.to_string(),
            error: Some(error),
            global: None,
            local: None,
            normalized_global: None,
            normalized_local: None,
            combined: None,
            diagnostics: None,
        }
    }

    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphInfo {
    pub nodes: usize,
    pub edges: usize,
    pub directed: bool,
    pub weighted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionInfo {
    pub communities: usize,
    /// `"input"`, `"louvain"` or `"ecg"`.
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub jsd_base: u32,
    pub alpha_step: f64,
    pub alpha_max: f64,
    pub patience: usize,
    pub auc_samples: usize,
    /// One pair sample is drawn per batch and reused for every alpha and
    /// every embedding.
    pub shared_pair_sample: bool,
    pub tie_tolerance: f64,
    pub split_jsd: bool,
    pub q: f64,
    pub eps: f64,
    pub seed: u64,
    pub options: EvaluateOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub schema: u32,
    pub graph: GraphInfo,
    pub partition: PartitionInfo,
    pub settings: Settings,
    pub embeddings: Vec<EmbeddingReport>,
    pub winner: Option<String>,
}

impl ScoreReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: ScoreReport = serde_json::from_str(text)?;
        if report.schema != SCHEMA_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported report schema {}",
                report.schema
            )));
        }
        Ok(report)
    }

    /// `name,global,local,combined` rows; failed embeddings have empty
    /// score cells.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let wrap = |e: csv::Error| Error::InvalidArgument(format!("csv: {e}"));
        w.write_record(["name", "global", "local", "combined"]).map_err(wrap)?;
        for e in &self.embeddings {
            let cell = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
            w.write_record([
                e.name.clone(),
                cell(e.global.as_ref().map(|g| g.score)),
                cell(e.local.as_ref().map(|l| l.score)),
                cell(e.combined),
            ])
            .map_err(wrap)?;
        }
        w.flush().map_err(|e| Error::io("csv output", e))
    }

    pub fn successes(&self) -> usize {
        self.embeddings.iter().filter(|e| e.succeeded()).count()
    }
}

/// Scores one embedding against a shared partition and pair sample.
fn score_one(
    graph: &Graph,
    partition: &Partition,
    sample: &PairSample,
    embedding: &Embedding,
    options: &EvaluateOptions,
) -> Result<(GlobalScoreResult, LocalScoreResult, Diagnostics)> {
    check_aligned(graph, Some(embedding), Some(partition))?;
    let search_opts = &options.search;
    let landmark_mode = options.uses_landmarks(graph.n());
    let (outcome, landmarks) = if landmark_mode {
        let set = refine_partition(graph, embedding, partition, &options.landmarks, &search_opts.gcl)?;
        let outcome = search(&Backend::Landmark(&set), graph, Some(partition), Some(sample), search_opts)?;
        (outcome, Some(set.n_prime()))
    } else {
        let geometry = Arc::new(Geometry::new(
            embedding.clone(),
            search_opts.gcl.metric,
            search_opts.gcl.clip,
        )?);
        let outcome = search(&Backend::Exact(geometry), graph, Some(partition), Some(sample), search_opts)?;
        (outcome, None)
    };
    let global = outcome.global.expect("global criterion requested");
    let local = outcome.local.expect("local criterion requested");
    let diagnostics = Diagnostics {
        fit_failures: outcome.failed_alphas.len(),
        failed_alphas: outcome.failed_alphas,
        clamped_pairs: global.clamped_pairs,
        landmark_mode,
        landmarks,
        seed: search_opts.seed,
        jsd_base: 2,
        grid_step: search_opts.alpha_step,
        max_fit_iterations: outcome.max_iterations,
        max_fit_residual: outcome.max_residual,
        last_fit_error: outcome.last_error,
    };
    Ok((global, local, diagnostics))
}

/// Scores every embedding with one shared partition and pair sample,
/// then ranks the successful ones by the combined score. Failures are
/// recorded per embedding.
pub fn evaluate(
    graph: &Graph,
    partition: &Partition,
    partition_source: &str,
    embeddings: &[(String, Result<Embedding>)],
    options: &EvaluateOptions,
) -> Result<ScoreReport> {
    options.search.validate()?;
    check_aligned(graph, None, Some(partition))?;
    combine(&[0.0], &[0.0], options.q, options.eps)?;
    let sample = sample_pairs(graph, options.search.auc_samples, options.search.seed)?;

    let mut records: Vec<EmbeddingReport> = embeddings
        .par_iter()
        .map(|(name, loaded)| {
            let scored = match loaded {
                Ok(e) => score_one(graph, partition, &sample, e, options),
                Err(e) => return EmbeddingReport::failed(name, e.to_string()),
            };
            match scored {
                Ok((global, local, diagnostics)) => EmbeddingReport {
                    name: name.clone(),
                    error: None,
                    global: Some(global),
                    local: Some(local),
                    normalized_global: None,
                    normalized_local: None,
                    combined: None,
                    diagnostics: Some(diagnostics),
                },
                Err(e) => EmbeddingReport::failed(name, e.to_string()),
            }
        })
        .collect();

    let ok: Vec<usize> = (0..records.len()).filter(|&i| records[i].succeeded()).collect();
    let mut winner = None;
    if !ok.is_empty() {
        let g: Vec<f64> = ok.iter().map(|&i| records[i].global.as_ref().unwrap().score).collect();
        let l: Vec<f64> = ok.iter().map(|&i| records[i].local.as_ref().unwrap().score).collect();
        let combined = combine(&g, &l, options.q, options.eps)?;
        let (ng, nl) = (normalize(&g, options.eps), normalize(&l, options.eps));
        for (k, &i) in ok.iter().enumerate() {
            records[i].normalized_global = Some(ng[k]);
            records[i].normalized_local = Some(nl[k]);
            records[i].combined = Some(combined[k]);
        }
        winner = ok
            .iter()
            .map(|&i| &records[i])
            .min_by(|a, b| {
                a.combined
                    .unwrap()
                    .total_cmp(&b.combined.unwrap())
                    .then_with(|| a.name.cmp(&b.name))
            })
            .map(|r| r.name.clone());
    }

    Ok(ScoreReport {
        schema: SCHEMA_VERSION,
        graph: GraphInfo {
            nodes: graph.n(),
            edges: graph.edge_count(),
            directed: graph.directed(),
            weighted: graph.weighted(),
        },
        partition: PartitionInfo {
            communities: partition.count(),
            source: partition_source.to_string(),
        },
        settings: Settings {
            jsd_base: 2,
            alpha_step: options.search.alpha_step,
            alpha_max: options.search.alpha_max,
            patience: options.search.patience,
            auc_samples: options.search.auc_samples,
            shared_pair_sample: true,
            tie_tolerance: TIE_TOLERANCE,
            split_jsd: options.search.split_jsd,
            q: options.q,
            eps: options.eps,
            seed: options.search.seed,
            options: options.clone(),
        },
        embeddings: records,
        winner,
    })
}
