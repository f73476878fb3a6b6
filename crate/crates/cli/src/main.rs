use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gee_core::gcl::{FitOptions, GclConfig, Metric};
use gee_core::io::{load_embedding, load_graph, load_partition, write_embedding, write_graph, write_partition};
use gee_core::landmarks::LandmarkConfig;
use gee_core::report::{cluster, evaluate, Clusterer, EvaluateOptions, Mode};
use gee_core::search::SearchOptions;
use gee_core::synth::{gen_embedding, gen_sbm};

/// Exit status when nothing could be scored.
const TOTAL_FAILURE: u8 = 2;

#[derive(Parser)]
#[command(name = "gee", version, about = "Unsupervised scores for comparing graph embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score one or more embeddings of a graph and rank them.
    Evaluate(EvaluateArgs),
    /// Write a synthetic SBM graph, its communities and noisy embeddings.
    Synth(SynthArgs),
}

#[derive(Args)]
struct EvaluateArgs {
    /// Edge list: `src dst [weight]` per line.
    #[arg(short = 'g', long)]
    graph: PathBuf,
    /// Embedding file: `node x1 ... xk` per line. Repeat for a batch.
    #[arg(short = 'e', long = "embedding", required = true)]
    embeddings: Vec<PathBuf>,
    /// Community file: `node label` per line. Clustered when absent.
    #[arg(short = 'c', long)]
    communities: Option<PathBuf>,
    #[arg(short = 'd', long)]
    directed: bool,
    /// Treat the graph as weighted even without a weight column.
    #[arg(short = 'w', long)]
    weighted: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Weight of the global score in the combined score.
    #[arg(short = 'q', default_value_t = 0.5)]
    q: f64,
    #[arg(long, default_value_t = 0.01)]
    eps: f64,
    /// Use landmark mode with this many landmarks.
    #[arg(long, conflicts_with = "force_exact")]
    landmarks: Option<usize>,
    /// Never use landmarks, whatever the graph size.
    #[arg(long)]
    force_exact: bool,
    /// Parts per community when fewer landmarks than communities are asked for.
    #[arg(long, default_value_t = 4)]
    split_factor: usize,
    #[arg(long, default_value_t = 0.25)]
    alpha_step: f64,
    #[arg(long, default_value_t = 32.0)]
    alpha_max: f64,
    #[arg(long, default_value_t = 10_000)]
    auc_samples: usize,
    /// Average the divergences of internal and external edge mass.
    #[arg(long)]
    split_jsd: bool,
    #[arg(long)]
    clusterer: Option<Clusterer>,
    #[arg(long, default_value = "euclidean")]
    metric: Metric,
    /// Clip normalized distances to [0.001, 0.999].
    #[arg(long)]
    clip: bool,
    #[arg(long, default_value_t = 1e-8)]
    fit_tol: f64,
    #[arg(long, default_value_t = 2000)]
    fit_max_iter: usize,
    /// JSON report path; stdout when absent.
    #[arg(short = 'o', long)]
    output: Option<PathBuf>,
    /// Also write `name,global,local,combined` rows here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 300)]
    nodes: usize,
    #[arg(long, default_value_t = 5)]
    blocks: usize,
    #[arg(long, default_value_t = 0.1)]
    p_in: f64,
    #[arg(long, default_value_t = 0.01)]
    p_out: f64,
    #[arg(short = 'd', long)]
    directed: bool,
    #[arg(long, default_value_t = 4)]
    dim: usize,
    #[arg(long, default_value_t = 1.0)]
    spread: f64,
    /// Noise level of each embedding; repeat for several.
    #[arg(long, default_values_t = [0.1])]
    noise: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = std::env::var("GEE_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if threads > 0 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global()
                .expect("thread pool configured once");
        }
    }
    let result = match cli.command {
        Command::Evaluate(args) => run_evaluate(&args),
        Command::Synth(args) => run_synth(&args).map(|()| ExitCode::SUCCESS),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(TOTAL_FAILURE)
    })
}

fn options(args: &EvaluateArgs) -> EvaluateOptions {
    let mode = if args.force_exact {
        Mode::Exact
    } else if args.landmarks.is_some() {
        Mode::Landmark
    } else {
        Mode::Auto
    };
    EvaluateOptions {
        search: SearchOptions {
            alpha_step: args.alpha_step,
            alpha_max: args.alpha_max,
            split_jsd: args.split_jsd,
            auc_samples: args.auc_samples,
            seed: args.seed,
            gcl: GclConfig {
                metric: args.metric,
                clip: args.clip.then_some((0.001, 0.999)),
                fit: FitOptions {
                    tol: args.fit_tol,
                    max_iter: args.fit_max_iter,
                    ..FitOptions::default()
                },
            },
            ..SearchOptions::default()
        },
        landmarks: LandmarkConfig {
            n_prime: args.landmarks,
            split_factor: args.split_factor,
            seed: args.seed,
            ..LandmarkConfig::default()
        },
        mode,
        q: args.q,
        eps: args.eps,
    }
}

fn run_evaluate(args: &EvaluateArgs) -> gee_core::Result<ExitCode> {
    let mut graph = load_graph(&args.graph, args.directed)?;
    if args.weighted {
        graph = graph.with_weighted(true);
    }
    let (partition, source) = match &args.communities {
        Some(path) => (load_partition(path, &graph)?, "input".to_string()),
        None => {
            let (p, which) = cluster(&graph, args.clusterer, args.seed)?;
            let name = serde_json::to_value(which)?.as_str().unwrap_or_default().to_string();
            (p, name)
        }
    };
    let embeddings: Vec<_> = args
        .embeddings
        .iter()
        .map(|path| (path.display().to_string(), load_embedding(path, &graph)))
        .collect();
    let report = evaluate(&graph, &partition, &source, &embeddings, &options(args))?;

    let json = report.to_json()?;
    match &args.output {
        Some(path) => write_text(path, &json)?,
        None => println!("{json}"),
    }
    if let Some(path) = &args.csv {
        let file = fs::File::create(path).map_err(|e| io_error(path, e))?;
        report.write_csv(file)?;
    }
    for e in report.embeddings.iter().filter(|e| !e.succeeded()) {
        eprintln!("{}: {}", e.name, e.error.as_deref().unwrap_or("failed"));
    }
    Ok(if report.successes() > 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(TOTAL_FAILURE)
    })
}

fn run_synth(args: &SynthArgs) -> gee_core::Result<()> {
    let (graph, partition) = gen_sbm(args.nodes, args.blocks, args.p_in, args.p_out, args.directed, args.seed)?;
    fs::create_dir_all(&args.out_dir).map_err(|e| io_error(&args.out_dir, e))?;
    write_graph(args.out_dir.join("graph.txt"), &graph)?;
    write_partition(args.out_dir.join("communities.txt"), &graph, &partition)?;
    for (i, &noise) in args.noise.iter().enumerate() {
        let seed = gee_core::rng::derive_seed(args.seed, i as u64 + 1);
        let embedding = gen_embedding(&partition, args.dim, args.spread, noise, seed)?;
        write_embedding(args.out_dir.join(format!("embedding_{i}.txt")), &graph, &embedding)?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> gee_core::Result<()> {
    fs::write(path, text).map_err(|e| io_error(path, e))
}

fn io_error(path: &Path, source: std::io::Error) -> gee_core::Error {
    gee_core::Error::Io {
        path: path.to_path_buf(),
        source,
    }
}
