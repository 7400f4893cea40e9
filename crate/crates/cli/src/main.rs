//! `treebary` — optimal transport on sampled tree metrics.
//!
//! Subcommands cover the full pipeline: grow a tree ensemble over a point
//! cloud (`sample-tree`), compute barycenters of measures attached to an
//! ensemble (`barycenter`), run two-level clustering of grouped data
//! (`multilevel`), aggregate posterior shards (`wasp`), and run benchmark
//! suites (`bench`).
//!
//! Exit codes: 0 success, 2 usage errors, 3 bad input data, 4 numeric
//! failure. All randomness flows from `--seed` (falling back to the
//! `TREEBARY_SEED` environment variable, then to 0), and re-running a
//! command with identical inputs and seed reproduces its outputs byte for
//! byte.

mod bench;
mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "treebary",
    version,
    about = "Optimal transport on sampled tree metrics"
)]
struct Cli {
    /// Worker threads for data-parallel loops (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Grow an ensemble of random tree metrics over a point cloud.
    SampleTree(SampleTreeArgs),
    /// Wasserstein barycenter of measures attached to a tree ensemble.
    Barycenter(BarycenterArgs),
    /// Joint local/global clustering of grouped point data.
    Multilevel(MultilevelArgs),
    /// Aggregate posterior shards into a barycenter posterior.
    Wasp(WaspArgs),
    /// Accuracy and timing benchmark suites.
    Bench(BenchArgs),
}

/// Tree-growing parameters shared by every command that samples an
/// ensemble.
#[derive(Args)]
struct TreeFlags {
    /// Branching factor of the recursive partition (≥ 2).
    #[arg(long, default_value_t = 4)]
    kappa: usize,

    /// Maximum tree depth, counting the root as level 1 (≥ 2).
    #[arg(long, default_value_t = 6)]
    depth: usize,

    /// Number of independent trees in the ensemble.
    #[arg(long = "num-trees", default_value_t = 10)]
    num_trees: usize,

    /// Lower bound on sampled edge lengths.
    #[arg(long = "min-edge-weight", default_value_t = treebary::SamplingConfig::DEFAULT_MIN_EDGE_WEIGHT)]
    min_edge_weight: f64,
}

#[derive(Args)]
struct SampleTreeArgs {
    /// Point cloud CSV: one point per row, one coordinate per column.
    points: PathBuf,

    #[command(flatten)]
    tree: TreeFlags,

    /// RNG seed (fallback: TREEBARY_SEED, then 0).
    #[arg(long)]
    seed: Option<u64>,

    /// Output ensemble JSON path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BarycenterArgs {
    /// Ensemble JSON produced by `sample-tree`.
    ensemble: PathBuf,

    /// Directory of measure CSV files (one per measure, coordinates with
    /// an optional trailing mass column), taken in file-name order.
    measures: PathBuf,

    /// Comma-separated barycentric weights, one per measure file
    /// (default: uniform). Normalized to sum to 1.
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,

    /// Cap the barycenter support size per tree.
    #[arg(long = "max-supports")]
    max_supports: Option<usize>,

    /// RNG seed for the support-reduction step (fallback: TREEBARY_SEED,
    /// then 0).
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MultilevelArgs {
    /// Directory of group CSV files (one point cloud per group), taken in
    /// file-name order.
    groups: PathBuf,

    /// Support budget of each group's local measure.
    #[arg(long = "local-k", default_value_t = 3)]
    local_k: usize,

    /// Number of global clusters (≥ 2).
    #[arg(long = "global-k")]
    global_k: usize,

    /// Balance between local fit and global clustering.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,

    /// Maximum alternating-minimization iterations.
    #[arg(long = "max-iters", default_value_t = 50)]
    max_iters: usize,

    #[command(flatten)]
    tree: TreeFlags,

    /// RNG seed (fallback: TREEBARY_SEED, then 0).
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct WaspArgs {
    /// Directory of shard CSV files (rows = posterior samples, columns =
    /// parameters), taken in file-name order.
    shards: PathBuf,

    #[command(flatten)]
    tree: TreeFlags,

    /// RNG seed (fallback: TREEBARY_SEED, then 0).
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Copy, Clone, ValueEnum)]
enum Suite {
    /// Closed-form tree distance against the exact transport solver.
    TwVsOracle,
    /// Barycenter wall time as the number of input measures grows.
    BarycenterScaling,
    /// Closed-form barycenter against a fixed-support entropic solver.
    SinkhornCompare,
}

#[derive(Args)]
struct BenchArgs {
    /// Benchmark suite to run.
    #[arg(long, value_enum)]
    suite: Suite,

    /// RNG seed (fallback: TREEBARY_SEED, then 0).
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

/// Resolves the effective seed: flag, then TREEBARY_SEED, then 0.
fn resolve_seed(flag: Option<u64>) -> anyhow::Result<u64> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match std::env::var("TREEBARY_SEED") {
        Ok(value) => value
            .trim()
            .parse()
            .map_err(|_| anyhow::anyhow!("TREEBARY_SEED is not an unsigned integer: {value:?}")),
        Err(_) => Ok(0),
    }
}

/// Maps an error to its exit code and message category. Failures inside
/// the numeric core (inversion, measure recovery, solver breakdown) are
/// `numeric`; everything else — I/O, parsing, malformed arguments — is
/// `data`.
fn classify(err: &anyhow::Error) -> (u8, &'static str) {
    match err.downcast_ref::<treebary::Error>() {
        Some(
            treebary::Error::Inversion { .. }
            | treebary::Error::NotAMeasure { .. }
            | treebary::Error::Numeric(_),
        ) => (4, "numeric"),
        _ => (3, "data"),
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        // Failure means a global pool already exists; keep using it.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let result = match cli.command {
        Command::SampleTree(args) => commands::sample_tree(args),
        Command::Barycenter(args) => commands::barycenter(args),
        Command::Multilevel(args) => commands::multilevel(args),
        Command::Wasp(args) => commands::wasp(args),
        Command::Bench(args) => bench::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (code, category) = classify(&err);
            eprintln!("error[{category}]: {err:#}");
            ExitCode::from(code)
        }
    }
}
