//! The alpha grid search shared by both scores. One model is fitted per
//! alpha and evaluated for every criterion still searching, so requesting
//! both scores costs a single sequence of fits.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gcl::{fit, BlockMass, GclConfig, GclModel, Geometry, Weights};
use crate::global::{divergence, graph_density_vector, DensityVector, GlobalScoreResult};
use crate::graph::{Graph, Partition};
use crate::landmarks::{LandmarkModel, LandmarkSet};
use crate::local::{auc_with, LocalScoreResult, PairSample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub alpha_step: f64,
    pub alpha_max: f64,
    /// Consecutive non-improving alphas before a criterion stops.
    pub patience: usize,
    pub split_jsd: bool,
    pub auc_samples: usize,
    pub seed: u64,
    pub gcl: GclConfig,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            alpha_step: 0.25,
            alpha_max: 32.0,
            patience: 5,
            split_jsd: false,
            auc_samples: 10_000,
            seed: 0,
            gcl: GclConfig::default(),
        }
    }
}

impl SearchOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_step > 0.0 && self.alpha_step.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "alpha step must be positive, got {}",
                self.alpha_step
            )));
        }
        if !(self.alpha_max >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha cap must be non-negative, got {}",
                self.alpha_max
            )));
        }
        if self.patience == 0 || self.auc_samples == 0 {
            return Err(Error::InvalidArgument(
                "patience and auc sample count must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn grid(&self) -> impl Iterator<Item = f64> + '_ {
        (0..)
            .map(|k| k as f64 * self.alpha_step)
            .take_while(|&a| a <= self.alpha_max + 1e-12)
    }
}

/// Where models come from: the full node geometry, or a landmark set.
pub(crate) enum Backend<'a> {
    Exact(Arc<Geometry>),
    Landmark(&'a LandmarkSet),
}

pub(crate) enum Fitted {
    Exact(GclModel),
    Landmark(LandmarkModel),
}

impl Fitted {
    fn warm_start(&self) -> Option<Weights> {
        let model = match self {
            Fitted::Exact(m) => m,
            Fitted::Landmark(m) => m.model(),
        };
        (!model.is_degenerate()).then(|| model.weights())
    }

    fn block_mass(&self, partition: &Partition) -> BlockMass {
        match self {
            Fitted::Exact(m) => crate::gcl::grouped_block_mass(m, partition.labels(), partition.count(), None),
            Fitted::Landmark(m) => m.block_mass(),
        }
    }

    fn iterations(&self) -> usize {
        match self {
            Fitted::Exact(m) => m.iterations(),
            Fitted::Landmark(m) => m.model().iterations(),
        }
    }

    fn residual(&self) -> f64 {
        match self {
            Fitted::Exact(m) => m.fit_residual(),
            Fitted::Landmark(m) => m.model().fit_residual(),
        }
    }

    fn auc(&self, sample: &PairSample, weighted: bool) -> (f64, f64) {
        match self {
            Fitted::Exact(m) => auc_with(|u, v| m.p(u, v), sample, weighted),
            Fitted::Landmark(m) => auc_with(|u, v| m.p(u, v), sample, weighted),
        }
    }
}

impl Backend<'_> {
    fn fit(&self, graph: &Graph, alpha: f64, config: &GclConfig, init: Option<&Weights>) -> Result<Fitted> {
        match self {
            Backend::Exact(geometry) => fit(graph, geometry, alpha, &config.fit, init).map(Fitted::Exact),
            Backend::Landmark(set) => set.fit(alpha, &config.fit, init).map(Fitted::Landmark),
        }
    }
}

/// Tracks one criterion's running minimum and its stopping counter.
struct Tracker {
    curve: Vec<(f64, f64)>,
    // Per curve point: clamp count (global) or CI half-width (local).
    extra: Vec<f64>,
    best: Option<(f64, usize)>,
    stale: usize,
    active: bool,
}

impl Tracker {
    fn new() -> Self {
        Tracker {
            curve: Vec::new(),
            extra: Vec::new(),
            best: None,
            stale: 0,
            active: true,
        }
    }

    /// `key` is minimized; `None` marks a failed fit.
    fn observe(&mut self, alpha: f64, value: Option<(f64, f64, f64)>, patience: usize) {
        match value {
            Some((key, shown, extra)) => {
                self.curve.push((alpha, shown));
                self.extra.push(extra);
                if self.best.is_none_or(|(b, _)| key < b) {
                    self.best = Some((key, self.curve.len() - 1));
                    self.stale = 0;
                } else {
                    self.stale += 1;
                }
            }
            None => self.stale += 1,
        }
        if self.stale >= patience {
            self.active = false;
        }
    }
}

#[derive(Debug, Clone, Default)]
pub(crate) struct SearchOutcome {
    pub global: Option<GlobalScoreResult>,
    pub local: Option<LocalScoreResult>,
    pub failed_alphas: Vec<f64>,
    pub last_error: Option<String>,
    pub max_iterations: usize,
    pub max_residual: f64,
}

pub(crate) fn search(
    backend: &Backend,
    graph: &Graph,
    partition: Option<&Partition>,
    sample: Option<&PairSample>,
    options: &SearchOptions,
) -> Result<SearchOutcome> {
    options.validate()?;
    let target: Option<DensityVector> = partition.map(|p| graph_density_vector(graph, p)).transpose()?;
    let mut global = target.as_ref().map(|_| Tracker::new());
    let mut local = sample.map(|_| Tracker::new());
    let weighted = graph.weighted();
    let mut outcome = SearchOutcome::default();
    let mut warm: Option<Weights> = None;
    let mut fitted_any = false;

    for alpha in options.grid() {
        let running = |t: &Option<Tracker>| t.as_ref().is_some_and(|t| t.active);
        if !running(&global) && !running(&local) {
            break;
        }
        let attempt = match backend.fit(graph, alpha, &options.gcl, warm.as_ref()) {
            // A warm start can sit outside the basin on a sharp alpha jump.
            Err(_) if warm.is_some() => backend.fit(graph, alpha, &options.gcl, None),
            other => other,
        };
        let fitted = match attempt {
            Ok(f) => f,
            Err(e) => {
                outcome.failed_alphas.push(alpha);
                outcome.last_error = Some(format!("alpha {alpha}: {e}"));
                for t in [&mut global, &mut local].into_iter().flatten() {
                    if t.active {
                        t.observe(alpha, None, options.patience);
                    }
                }
                continue;
            }
        };
        fitted_any = true;
        outcome.max_iterations = outcome.max_iterations.max(fitted.iterations());
        outcome.max_residual = outcome.max_residual.max(fitted.residual());

        if let (Some(t), Some(c), Some(p)) = (global.as_mut(), target.as_ref(), partition) {
            if t.active {
                let block = fitted.block_mass(p);
                let b = DensityVector::from_block_mass(&block, graph.directed());
                let d = divergence(c, &b, options.split_jsd)?;
                t.observe(alpha, Some((d, d, block.clamped as f64)), options.patience);
            }
        }
        if let (Some(t), Some(s)) = (local.as_mut(), sample) {
            if t.active {
                let (auc, ci) = fitted.auc(s, weighted);
                t.observe(alpha, Some((-auc, auc, ci)), options.patience);
            }
        }
        warm = fitted.warm_start();
    }

    if !fitted_any {
        return Err(Error::AllFitsFailed(outcome.failed_alphas.len()));
    }
    let failed = outcome.failed_alphas.clone();
    outcome.global = global.map(|t| {
        let (_, i) = t.best.expect("at least one fit succeeded");
        let (best_alpha, score) = t.curve[i];
        GlobalScoreResult {
            score,
            best_alpha,
            clamped_pairs: t.extra[i] as usize,
            curve: t.curve,
            failed_alphas: failed.clone(),
        }
    });
    outcome.local = local.map(|t| {
        let (_, i) = t.best.expect("at least one fit succeeded");
        let (best_alpha, auc) = t.curve[i];
        LocalScoreResult {
            score: 1.0 - auc,
            best_alpha,
            auc,
            ci_halfwidth: t.extra[i],
            curve: t.curve,
            failed_alphas: failed,
        }
    });
    Ok(outcome)
}
