//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any fails.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use gee_core::gcl::{check_feasibility, fit, Feasibility, FitOptions, Geometry, Metric, Weights};
use gee_core::global::jsd;
use gee_core::local::{auc_estimate, sample_pairs};
use gee_core::report::{combine, evaluate, EvaluateOptions, Mode, ScoreReport};
use gee_core::rng::{derive_seed, seeded, Rng};
use gee_core::synth::{gen_embedding, gen_sbm, rescale_communities, rewire_within};
use gee_core::{Edge, Embedding, Graph, Partition};
use rand::Rng as _;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_digraph(n: usize, density: f64, rng: &mut Rng) -> Graph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.random::<f64>() < density {
                edges.push(Edge::unit(i, j));
            }
        }
    }
    Graph::new(n, true, edges).unwrap()
}

fn random_feasible_digraph(n: usize, rng: &mut Rng) -> Graph {
    loop {
        let density = rng.random_range(0.05..0.3);
        let g = random_digraph(n, density, rng);
        if g.edge_count() > 0 && check_feasibility(&g) == Feasibility::Feasible {
            return g;
        }
    }
}

fn random_embedding(n: usize, k: usize, rng: &mut Rng) -> Embedding {
    let coords = (0..n * k).map(|_| rng.random::<f64>()).collect();
    Embedding::new(n, k, coords).unwrap()
}

fn geometry(e: &Embedding) -> Arc<Geometry> {
    Arc::new(Geometry::new(e.clone(), Metric::Euclidean, None).unwrap())
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Kernel matrix straight from the definition, loops excluded.
fn oracle_kernel(e: &Embedding, alpha: f64) -> Vec<Vec<f64>> {
    let n = e.n();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..n {
        for j in i + 1..n {
            let d = euclid(e.row(i), e.row(j));
            lo = lo.min(d);
            hi = hi.max(d);
        }
    }
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        0.0
                    } else {
                        ((hi - euclid(e.row(i), e.row(j))) / (hi - lo)).powf(alpha)
                    }
                })
                .collect()
        })
        .collect()
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn batch(
    graph: &Graph,
    partition: &Partition,
    embeddings: Vec<(String, Embedding)>,
    options: &EvaluateOptions,
) -> ScoreReport {
    let named: Vec<_> = embeddings.into_iter().map(|(n, e)| (n, Ok(e))).collect();
    let report = evaluate(graph, partition, "truth", &named, options).unwrap();
    for r in &report.embeddings {
        assert!(r.succeeded(), "{}: {:?}", r.name, r.error);
    }
    report
}

fn scores(report: &ScoreReport) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let g = report.embeddings.iter().map(|r| r.global.as_ref().unwrap().score).collect();
    let l = report.embeddings.iter().map(|r| r.local.as_ref().unwrap().score).collect();
    let ci = report.embeddings.iter().map(|r| r.local.as_ref().unwrap().ci_halfwidth).collect();
    (g, l, ci)
}

fn degree_reproduction() -> Outcome {
    let start = Instant::now();
    let mut rng = seeded(1);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = rng.random_range(10..=100);
        let g = random_feasible_digraph(n, &mut rng);
        let e = random_embedding(n, 2, &mut rng);
        let geo = geometry(&e);
        for alpha in [0.0, 0.5, 1.0, 2.0, 4.0] {
            let m = fit(&g, &geo, alpha, &FitOptions::default(), None).unwrap();
            let k = oracle_kernel(&e, alpha);
            for i in 0..n {
                let out: f64 = (0..n).map(|j| m.x_out()[i] * m.x_in()[j] * k[i][j]).sum();
                let inn: f64 = (0..n).map(|j| m.x_out()[j] * m.x_in()[i] * k[j][i]).sum();
                for (got, want) in [(out, g.w_out()[i]), (inn, g.w_in()[i])] {
                    let err = if want > 0.0 { (got - want).abs() / want } else { got.abs() };
                    worst = worst.max(err);
                }
            }
        }
    }
    let took = start.elapsed();
    outcome(
        worst <= 1e-8 && took < Duration::from_secs(10),
        format!("max relative degree error {worst:.2e} over 250 fits in {took:.2?}"),
    )
}

fn chung_lu_reduction() -> Outcome {
    let mut rng = seeded(2);
    let mut spread_loops = 0.0f64;
    let mut spread_plain = 0.0f64;
    for trial in 0..10 {
        let n = rng.random_range(10..=60);
        let mut g = random_feasible_digraph(n, &mut rng);
        if trial % 2 == 1 {
            let edges = g.edges().iter().filter(|e| e.src < e.dst).copied().collect();
            g = Graph::new(n, false, edges).unwrap();
        }
        let e = random_embedding(n, 2, &mut rng);
        let plain = geometry(&e);
        let looped = Arc::new(
            Geometry::with_bounds(
                e.clone(),
                Metric::Euclidean,
                plain.d_min(),
                plain.d_max(),
                None,
                Some(vec![0.0; n]),
            )
            .unwrap(),
        );
        for (geo, spread) in [(&looped, &mut spread_loops), (&plain, &mut spread_plain)] {
            let m = fit(&g, geo, 0.0, &FitOptions::default(), None).unwrap();
            let ratios: Vec<f64> = (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .filter(|&(i, j)| i != j && g.w_out()[i] > 0.0 && g.w_in()[j] > 0.0)
                .map(|(i, j)| m.p(i, j) / (g.w_out()[i] * g.w_in()[j]))
                .collect();
            let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = ratios.iter().copied().fold(0.0, f64::max);
            *spread = spread.max((hi - lo) / lo);
        }
    }
    outcome(
        spread_loops <= 1e-10,
        format!(
            "ratio spread {spread_loops:.2e} with self-loop terms; {spread_plain:.2e} when loops are excluded"
        ),
    )
}

fn uniqueness() -> Outcome {
    let mut rng = seeded(3);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let n = rng.random_range(10..=80);
        let g = random_feasible_digraph(n, &mut rng);
        let e = random_embedding(n, 2, &mut rng);
        let geo = geometry(&e);
        let alpha = [0.5, 1.0, 2.0, 4.0][rng.random_range(0..4)];
        let init = Weights::initial(g.w_out(), g.w_in());
        let a = fit(&g, &geo, alpha, &FitOptions::default(), Some(&init.scaled(2.0))).unwrap();
        let b = fit(&g, &geo, alpha, &FitOptions::default(), Some(&init.scaled(0.5))).unwrap();
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((a.p(i, j) - b.p(i, j)).abs());
            }
        }
    }
    outcome(worst <= 1e-6, format!("max |p_a - p_b| = {worst:.2e} over 20 instances"))
}

fn degenerate_handling() -> Outcome {
    let n = 8;
    let mut cases = vec![
        Graph::new(n, true, (1..n).map(|j| Edge::unit(0, j)).collect()).unwrap(),
        Graph::new(
            n,
            true,
            (1..n)
                .flat_map(|j| {
                    let mut v = vec![Edge::unit(j, 0)];
                    if j % 2 == 0 {
                        v.push(Edge::unit(0, j));
                    }
                    v
                })
                .collect(),
        )
        .unwrap(),
        Graph::new(n, false, (0..n).filter(|&j| j != 3).map(|j| Edge::unit(3, j)).collect()).unwrap(),
        Graph::new(n, true, vec![Edge::unit(2, 5)]).unwrap(),
        Graph::new(n, true, vec![Edge::unit(2, 5), Edge::unit(5, 2)]).unwrap(),
        Graph::new(2, false, vec![Edge::unit(0, 1)]).unwrap(),
    ];
    cases.push(Graph::new(2, true, vec![Edge::unit(1, 0)]).unwrap());
    let mut rng = seeded(4);
    let mut failures = Vec::new();
    for (c, g) in cases.iter().enumerate() {
        let e = random_embedding(g.n(), 2, &mut rng);
        let m = fit(g, &geometry(&e), 1.5, &FitOptions::default(), None).unwrap();
        let exact = (0..g.n())
            .all(|i| (0..g.n()).all(|j| m.p(i, j) == if g.has_edge(i, j) { 1.0 } else { 0.0 }));
        if !(m.is_degenerate() && m.iterations() == 0 && exact) {
            failures.push(c);
        }
    }
    outcome(
        failures.is_empty(),
        format!("{} star/two-node graphs, mismatches {failures:?}", cases.len()),
    )
}

/// Direct definition: mean KL divergence to the midpoint, in bits.
fn oracle_jsd(p: &[f64], q: &[f64]) -> f64 {
    let mut d = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let m = 0.5 * (a + b);
        if a > 0.0 {
            d += 0.5 * a * (a / m).log2();
        }
        if b > 0.0 {
            d += 0.5 * b * (b / m).log2();
        }
    }
    d
}

fn random_distribution(len: usize, rng: &mut Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..len)
        .map(|_| if rng.random::<f64>() < 0.2 { 0.0 } else { rng.random::<f64>() })
        .collect();
    if v.iter().all(|&x| x == 0.0) {
        v[0] = 1.0;
    }
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= total);
    v
}

fn jsd_oracle() -> Outcome {
    let mut rng = seeded(5);
    let mut worst = 0.0f64;
    let mut self_zero = true;
    for _ in 0..1000 {
        let len = rng.random_range(2..=64);
        let p = random_distribution(len, &mut rng);
        let q = random_distribution(len, &mut rng);
        worst = worst.max((jsd(&p, &q).unwrap() - oracle_jsd(&p, &q)).abs());
        self_zero &= jsd(&p, &p).unwrap() == 0.0;
    }
    outcome(
        worst <= 1e-12 && self_zero,
        format!("max deviation {worst:.2e} on 1000 pairs; jsd(v, v) == 0: {self_zero}"),
    )
}

/// Mean over every (edge, non-edge) pair with the half-credit tie rule.
fn exhaustive_auc(g: &Graph, p: impl Fn(usize, usize) -> f64) -> f64 {
    let n = g.n();
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                if g.has_edge(i, j) {
                    pos.push(p(i, j));
                } else {
                    neg.push(p(i, j));
                }
            }
        }
    }
    let mut total = 0.0;
    for &a in &pos {
        for &b in &neg {
            total += if a > b {
                1.0
            } else if a == b {
                0.5
            } else {
                0.0
            };
        }
    }
    total / (pos.len() * neg.len()) as f64
}

fn auc_sampling() -> Outcome {
    let mut rng = seeded(6);
    let graphs: Vec<Graph> = (0..30)
        .map(|_| {
            let n = rng.random_range(10..=50);
            random_feasible_digraph(n, &mut rng)
        })
        .collect();
    let mut covered = 0;
    for trial in 0..100u64 {
        let g = &graphs[trial as usize % graphs.len()];
        let e = random_embedding(g.n(), 2, &mut rng);
        let m = fit(g, &geometry(&e), 2.0, &FitOptions::default(), None).unwrap();
        let truth = exhaustive_auc(g, |i, j| m.p(i, j));
        let sample = sample_pairs(g, 2000, derive_seed(6, trial)).unwrap();
        let (p_hat, ci) = auc_estimate(&m, &sample, false);
        if (truth - p_hat).abs() <= ci {
            covered += 1;
        }
    }
    outcome(covered >= 93, format!("exhaustive AUC inside the 95% CI in {covered}/100 trials"))
}

fn landmark_fidelity() -> Outcome {
    let start = Instant::now();
    let (g, p) = gen_sbm(1000, 10, 0.1, 0.005, true, 11).unwrap();
    let noise = [0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.7, 1.0, 1.5, 2.0];
    let embeddings: Vec<_> = noise
        .iter()
        .enumerate()
        .map(|(i, &s)| (format!("noise_{s}"), gen_embedding(&p, 4, 1.0, s, 100 + i as u64).unwrap()))
        .collect();
    let exact = EvaluateOptions {
        mode: Mode::Exact,
        ..EvaluateOptions::default()
    };
    let approx = EvaluateOptions {
        mode: Mode::Landmark,
        ..EvaluateOptions::default()
    };
    let (eg, el, _) = scores(&batch(&g, &p, embeddings.clone(), &exact));
    let lm = batch(&g, &p, embeddings, &approx);
    let (ag, al, _) = scores(&lm);
    let used = lm.embeddings[0].diagnostics.as_ref().unwrap().landmarks.unwrap();
    let (rg, rl) = (pearson(&eg, &ag), pearson(&el, &al));
    let took = start.elapsed();
    outcome(
        rg >= 0.95 && rl >= 0.90 && took < Duration::from_secs(300),
        format!("Pearson global {rg:.4}, local {rl:.4} with n' = {used}, {took:.2?}"),
    )
}

/// Adjacent inversions of a sequence that should not decrease, with the
/// largest drop among them.
fn inversions(xs: &[f64]) -> (usize, f64) {
    xs.windows(2)
        .filter(|w| w[1] < w[0])
        .fold((0, 0.0), |(c, m), w| (c + 1, f64::max(m, w[0] - w[1])))
}

fn score_discrimination() -> Outcome {
    let (g, p) = gen_sbm(300, 5, 0.15, 0.01, true, 21).unwrap();
    // Five blocks in five dimensions get equidistant centres, matching the
    // SBM's uniform inter-block density. One seed for all levels keeps the
    // noise directions fixed, so only their scale changes.
    let embeddings = [0.0, 0.1, 0.3, 1.0]
        .iter()
        .map(|&s| (format!("noise_{s}"), gen_embedding(&p, 5, 1.0, s, 22).unwrap()))
        .collect();
    // Noise 0 puts whole communities on single points; clipping keeps the
    // kernel positive at the largest distance.
    let mut options = EvaluateOptions::default();
    options.search.gcl.clip = Some((0.001, 0.999));
    let report = batch(&g, &p, embeddings, &options);
    let (gs, ls, ci) = scores(&report);
    let width = 2.0 * ci.iter().copied().fold(0.0, f64::max);
    let (gi, gd) = inversions(&gs);
    let (li, ld) = inversions(&ls);
    let ok = |count: usize, drop: f64| count == 0 || (count == 1 && drop <= width);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ");
    outcome(
        ok(gi, gd) && ok(li, ld),
        format!(
            "global [{}] ({gi} inversions, max drop {gd:.4}), local [{}] ({li} inversions), AUC CI width {width:.4}",
            fmt(&gs),
            fmt(&ls)
        ),
    )
}

/// Communities around separated centres; inside a community, edge
/// probability decays with embedded distance, so the embedding carries
/// local structure as well as the community layout.
fn geometric_communities(seed: u64) -> (Graph, Partition, Embedding) {
    let n = 300;
    let labels: Vec<usize> = (0..n).map(|i| i * 5 / n).collect();
    let partition = Partition::from_labels(&labels);
    let e = gen_embedding(&partition, 2, 1.0, 0.2, seed).unwrap();
    let mut rng = seeded(derive_seed(seed, 1));
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if labels[i] == labels[j] {
                (-euclid(e.row(i), e.row(j)) / 0.1).exp()
            } else {
                0.004
            };
            if rng.random::<f64>() < p {
                edges.push(Edge::unit(i, j));
            }
        }
    }
    (Graph::new(n, false, edges).unwrap(), partition, e)
}

fn dissociation() -> Outcome {
    let (g, p, e) = geometric_communities(31);
    let options = EvaluateOptions::default();

    let mut rewired = Vec::new();
    for (i, fraction) in [0.0, 0.5, 1.0].into_iter().enumerate() {
        let (h, _) = rewire_within(&g, &p, fraction, derive_seed(32, i as u64)).unwrap();
        let (gs, ls, _) = scores(&batch(&h, &p, vec![("e".into(), e.clone())], &options));
        rewired.push((gs[0], ls[0]));
    }
    let base = rewired[0];
    let global_flat = rewired.iter().all(|r| (r.0 - base.0).abs() <= 0.02);
    let local_up = rewired[2].1 - base.1 >= 0.02;

    let scaled: Vec<_> = [1.0, 1.3, 1.5]
        .iter()
        .map(|&q| (format!("q_{q}"), rescale_communities(&e, &p, q).unwrap()))
        .collect();
    let (gs, ls, ci) = scores(&batch(&g, &p, scaled, &options));
    let local_flat = ls.iter().all(|l| (l - ls[0]).abs() <= 2.0 * ci[0]);
    let global_up = gs.windows(2).all(|w| w[1] > w[0]);

    outcome(
        global_flat && local_up && local_flat && global_up,
        format!(
            "rewire (global, local): {}; rescale global [{}], local [{}], 2ci {:.4}",
            rewired
                .iter()
                .map(|(a, b)| format!("({a:.4}, {b:.4})"))
                .collect::<Vec<_>>()
                .join(" "),
            gs.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", "),
            ls.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", "),
            2.0 * ci[0]
        ),
    )
}

fn combined_score() -> Outcome {
    let c = combine(&[0.1, 0.2], &[0.3, 0.3], 0.5, 0.01).unwrap();
    let hand = [1.0, 0.5 * 0.21 / 0.11 + 0.5 * 0.31 / 0.31];
    let mut ok = c.iter().zip(hand).all(|(a, b)| (a - b).abs() <= 1e-12);
    let q1 = combine(&[0.3, 0.1, 0.2], &[0.0, 0.5, 0.9], 1.0, 0.01).unwrap();
    ok &= q1[1] == 1.0 && q1[0] > q1[2] && q1[2] > q1[1];

    let mut rng = seeded(10);
    let mut lowest = f64::INFINITY;
    for _ in 0..1000 {
        let len = rng.random_range(1..=8);
        let gs: Vec<f64> = (0..len).map(|_| rng.random::<f64>()).collect();
        let ls: Vec<f64> = (0..len).map(|_| rng.random::<f64>()).collect();
        let q = rng.random::<f64>();
        let c = combine(&gs, &ls, q, 0.01).unwrap();
        lowest = lowest.min(c.iter().copied().fold(f64::INFINITY, f64::min));
    }
    ok &= lowest >= 1.0;

    let (g, p) = gen_sbm(60, 3, 0.3, 0.02, false, 12).unwrap();
    let e = gen_embedding(&p, 2, 1.0, 0.3, 13).unwrap();
    let single = batch(&g, &p, vec![("only".into(), e)], &EvaluateOptions::default());
    let alone = single.embeddings[0].combined.unwrap();
    ok &= alone == 1.0;
    outcome(
        ok,
        format!("example {:.15}, min over random batches {lowest}, single batch {alone}", c[1]),
    )
}

/// Random orthogonal matrix via Gram-Schmidt on Gaussian-ish columns.
fn rotation(k: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    while basis.len() < k {
        let mut v: Vec<f64> = (0..k).map(|_| rng.random::<f64>() - 0.5).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-3 {
            basis.push(v.iter().map(|x| x / norm).collect());
        }
    }
    basis
}

fn affine_invariance() -> Outcome {
    let (g, p) = gen_sbm(200, 4, 0.2, 0.02, true, 41).unwrap();
    let e = gen_embedding(&p, 3, 1.0, 0.4, 42).unwrap();
    let mut rng = seeded(43);
    let r = rotation(3, &mut rng);
    let shift = [3.5, -12.0, 0.75];
    let moved = |f: &dyn Fn(&[f64]) -> Vec<f64>| e.map_rows(|_, row| f(row)).unwrap();
    let variants = vec![
        ("original".to_string(), e.clone()),
        ("translated".to_string(), moved(&|x| x.iter().zip(shift).map(|(a, b)| a + b).collect())),
        (
            "rotated".to_string(),
            moved(&|x| r.iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()),
        ),
        ("scaled".to_string(), moved(&|x| x.iter().map(|a| a * 7.25).collect())),
    ];
    let report = batch(&g, &p, variants, &EvaluateOptions::default());
    let base = &report.embeddings[0];
    let mut worst = 0.0f64;
    let mut same_length = true;
    for r in &report.embeddings[1..] {
        let pairs = [
            (&base.global.as_ref().unwrap().curve, &r.global.as_ref().unwrap().curve),
            (&base.local.as_ref().unwrap().curve, &r.local.as_ref().unwrap().curve),
        ];
        for (a, b) in pairs {
            same_length &= a.len() == b.len();
            for (x, y) in a.iter().zip(b.iter()) {
                worst = worst.max((x.0 - y.0).abs()).max((x.1 - y.1).abs());
            }
        }
    }
    outcome(
        same_length && worst <= 1e-9,
        format!("max curve deviation {worst:.2e} across translation, rotation, scaling"),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("degree reproduction", degree_reproduction),
        ("Chung-Lu reduction at alpha = 0", chung_lu_reduction),
        ("uniqueness from perturbed starts", uniqueness),
        ("degenerate graphs", degenerate_handling),
        ("JSD against direct formula", jsd_oracle),
        ("AUC sampling coverage", auc_sampling),
        ("landmark fidelity", landmark_fidelity),
        ("score discrimination", score_discrimination),
        ("rewiring and rescaling dissociation", dissociation),
        ("combined score", combined_score),
        ("affine invariance", affine_invariance),
    ];
    let filter = std::env::args().nth(1).filter(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if filter.as_ref().is_some_and(|f| f != &id) {
            continue;
        }
        let o = run();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("{tag} {id:>2} {name}: {}", o.detail);
        failed += usize::from(!o.pass);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
