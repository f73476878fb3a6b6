//! Solver for the weight equations
//! `w_out[i] = x_out[i] * (G x_in)[i]`, `w_in[i] = x_in[i] * (G x_out)[i]`.
//!
//! The base map is the damped alternating update
//! `x <- (1 - l) x + l w / (G y)`. On strongly clustered geometries it
//! contracts slowly, so iterates are mixed with Anderson acceleration in
//! log space. A mixed step that blows the residual up, or a run of steps
//! that fails to improve on the best residual, resets the history and
//! resumes from the best plain iterate seen so far. After repeated resets
//! the plain map runs on its own.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::gcl::{FitOptions, Weights};

/// Residual growth, relative to the best seen, that triggers a restart.
const BLOWUP: f64 = 1e3;
/// Sweeps without a new best residual that trigger a restart.
const STALL: usize = 30;
/// Restarts after which mixing is abandoned.
const MAX_RESTARTS: usize = 3;

/// One evaluation of the base map at a point.
struct Step {
    residual: f64,
    next: Vec<f64>,
}

fn max_relative_error(x: &[f64], sums: &[f64], w: &[f64]) -> f64 {
    x.iter()
        .zip(sums)
        .zip(w)
        .map(|((x, s), w)| (x * s - w).abs() / w.max(1.0))
        .fold(0.0, f64::max)
}

/// `None` when a node with positive degree has no kernel mass.
fn damped(x: &[f64], sums: &[f64], w: &[f64], damping: f64) -> Option<Vec<f64>> {
    x.iter()
        .zip(sums)
        .zip(w)
        .map(|((&x, &s), &w)| {
            if w == 0.0 {
                Some(0.0)
            } else if s > 0.0 {
                Some((1.0 - damping) * x + damping * w / s)
            } else {
                None
            }
        })
        .collect()
}

pub(crate) fn solve_directed(
    apply: impl Fn(&[f64], &mut [f64]),
    w_out: &[f64],
    w_in: &[f64],
    start: Weights,
    opts: &FitOptions,
) -> Result<(Weights, f64, usize)> {
    let n = w_out.len();
    let map = |x: &[f64]| -> Option<Step> {
        let (x_out, x_in) = x.split_at(n);
        let mut s = vec![0.0; n];
        let mut t = vec![0.0; n];
        let mut t_next = vec![0.0; n];
        apply(x_in, &mut s);
        apply(x_out, &mut t);
        let residual = max_relative_error(x_out, &s, w_out).max(max_relative_error(x_in, &t, w_in));
        let out_next = damped(x_out, &s, w_out, opts.damping)?;
        apply(&out_next, &mut t_next);
        let in_next = damped(x_in, &t_next, w_in, opts.damping)?;
        Some(Step {
            residual,
            next: [out_next, in_next].concat(),
        })
    };
    let degrees: Vec<f64> = w_out.iter().chain(w_in).copied().collect();
    let x0 = [start.x_out, start.x_in].concat();
    let (x, residual, iterations) = iterate(map, &degrees, x0, opts)?;
    let (x_out, x_in) = x.split_at(n);
    Ok((
        Weights {
            x_out: x_out.to_vec(),
            x_in: x_in.to_vec(),
        },
        residual,
        iterations,
    ))
}

pub(crate) fn solve_undirected(
    apply: impl Fn(&[f64], &mut [f64]),
    w: &[f64],
    start: Weights,
    opts: &FitOptions,
) -> Result<(Weights, f64, usize)> {
    let n = w.len();
    let map = |x: &[f64]| -> Option<Step> {
        let mut s = vec![0.0; n];
        apply(x, &mut s);
        let residual = max_relative_error(x, &s, w);
        Some(Step {
            residual,
            next: damped(x, &s, w, opts.damping)?,
        })
    };
    // A directed-style start may carry a gauge; the symmetric system has
    // none, so combine the two sides geometrically.
    let x0: Vec<f64> = start
        .x_out
        .iter()
        .zip(&start.x_in)
        .map(|(a, b)| (a * b).sqrt())
        .collect();
    let (x, residual, iterations) = iterate(map, w, x0, opts)?;
    Ok((
        Weights {
            x_out: x.clone(),
            x_in: x,
        },
        residual,
        iterations,
    ))
}

fn iterate(
    map: impl Fn(&[f64]) -> Option<Step>,
    degrees: &[f64],
    mut x: Vec<f64>,
    opts: &FitOptions,
) -> Result<(Vec<f64>, f64, usize)> {
    let active: Vec<usize> = (0..degrees.len()).filter(|&i| degrees[i] > 0.0).collect();
    for (xi, &w) in x.iter_mut().zip(degrees) {
        if w == 0.0 {
            *xi = 0.0;
        } else if !(*xi > 0.0 && xi.is_finite()) {
            return Err(Error::InvalidArgument(
                "initial weights must be positive where the degree is positive".into(),
            ));
        }
    }
    let mut mixer = Anderson::new(opts.anderson);
    let mut mixing = opts.anderson > 0;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut since_best = 0;
    let mut restarts = 0;
    let mut residual = f64::INFINITY;

    for iter in 0..=opts.max_iter {
        let step = match map(&x) {
            Some(step) if step.residual.is_finite() => step,
            _ => {
                // A mixed iterate left the feasible region; fall back.
                match &best {
                    Some((_, plain)) if mixing => {
                        x = plain.clone();
                        mixer.reset();
                        restarts += 1;
                        mixing = restarts < MAX_RESTARTS;
                        since_best = 0;
                        continue;
                    }
                    _ => {
                        return Err(Error::NoConvergence {
                            iterations: iter,
                            residual,
                        })
                    }
                }
            }
        };
        residual = step.residual;
        if residual <= opts.tol {
            return Ok((x, residual, iter));
        }
        if iter == opts.max_iter {
            break;
        }
        if !mixing {
            x = step.next;
            continue;
        }
        let best_residual = best.as_ref().map_or(f64::INFINITY, |b| b.0);
        if residual > BLOWUP * best_residual || since_best >= STALL {
            x = best.as_ref().expect("best set").1.clone();
            mixer.reset();
            restarts += 1;
            mixing = restarts < MAX_RESTARTS;
            since_best = 0;
            continue;
        }
        let z: Vec<f64> = active.iter().map(|&i| x[i].ln()).collect();
        let gz: Vec<f64> = active.iter().map(|&i| step.next[i].ln()).collect();
        let mixed = mixer.mix(&z, &gz);
        if residual < best_residual {
            best = Some((residual, step.next));
            since_best = 0;
        } else {
            since_best += 1;
        }
        for (&i, v) in active.iter().zip(mixed) {
            x[i] = v.exp();
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        residual,
    })
}

/// Type-II Anderson mixing with a bounded history window.
struct Anderson {
    window: usize,
    prev: Option<(Vec<f64>, Vec<f64>)>,
    // (delta g, delta f) columns
    history: VecDeque<(Vec<f64>, Vec<f64>)>,
}

impl Anderson {
    fn new(window: usize) -> Self {
        Anderson {
            window,
            prev: None,
            history: VecDeque::with_capacity(window),
        }
    }

    fn reset(&mut self) {
        self.prev = None;
        self.history.clear();
    }

    /// Given the current point `z` and its image `gz`, returns the next
    /// iterate.
    fn mix(&mut self, z: &[f64], gz: &[f64]) -> Vec<f64> {
        let f: Vec<f64> = gz.iter().zip(z).map(|(g, z)| g - z).collect();
        if let Some((pg, pf)) = self.prev.take() {
            let dg = gz.iter().zip(&pg).map(|(a, b)| a - b).collect();
            let df = f.iter().zip(&pf).map(|(a, b)| a - b).collect();
            if self.history.len() == self.window {
                self.history.pop_front();
            }
            self.history.push_back((dg, df));
        }
        self.prev = Some((gz.to_vec(), f.clone()));
        if self.history.is_empty() {
            return gz.to_vec();
        }
        let m = self.history.len();
        let mut gram = vec![0.0; m * m];
        let mut rhs = vec![0.0; m];
        for a in 0..m {
            let fa = &self.history[a].1;
            rhs[a] = dot(fa, &f);
            for b in 0..=a {
                let v = dot(fa, &self.history[b].1);
                gram[a * m + b] = v;
                gram[b * m + a] = v;
            }
        }
        let scale = (0..m).map(|a| gram[a * m + a]).fold(0.0, f64::max);
        if scale == 0.0 {
            return gz.to_vec();
        }
        for a in 0..m {
            gram[a * m + a] += 1e-10 * scale;
        }
        let Some(gamma) = solve_dense(gram, rhs, m) else {
            self.history.clear();
            return gz.to_vec();
        };
        let mut out = gz.to_vec();
        for (g, (dg, _)) in gamma.iter().zip(&self.history) {
            for (o, d) in out.iter_mut().zip(dg) {
                *o -= g * d;
            }
        }
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gaussian elimination with partial pivoting on a small dense system.
fn solve_dense(mut a: Vec<f64>, mut b: Vec<f64>, m: usize) -> Option<Vec<f64>> {
    for col in 0..m {
        let pivot = (col..m).max_by(|&i, &j| a[i * m + col].abs().total_cmp(&a[j * m + col].abs()))?;
        if a[pivot * m + col].abs() < f64::MIN_POSITIVE {
            return None;
        }
        if pivot != col {
            for k in 0..m {
                a.swap(col * m + k, pivot * m + k);
            }
            b.swap(col, pivot);
        }
        for row in col + 1..m {
            let factor = a[row * m + col] / a[col * m + col];
            for k in col..m {
                a[row * m + k] -= factor * a[col * m + k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; m];
    for row in (0..m).rev() {
        let tail: f64 = (row + 1..m).map(|k| a[row * m + k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row * m + row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}
