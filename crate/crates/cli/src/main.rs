//! `gpt`: fit, apply and study GP regression trees from the command line.
//!
//! Exit codes: 0 success, 2 unreadable input, 3 insufficient data,
//! 4 no leaf converged, 1 anything else.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "gpt", version, about = "Generalized Pareto regression trees for threshold excesses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Grow, prune and write a tree with its DOT drawing and leaf table.
    Fit(FitArgs),
    /// Leaf parameters for each row of a query table.
    Predict(PredictArgs),
    /// Burr simulation study, or a synthetic flood-schema table.
    Simulate(SimulateArgs),
    /// Refit the pipeline over a grid of thresholds.
    Sweep(SweepArgs),
    /// Re-render a saved tree as DOT and canonical JSON.
    Export(ExportArgs),
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Name of the response column.
    #[arg(long)]
    response: String,
    /// Columns to read as categorical.
    #[arg(long, value_delimiter = ',')]
    categorical: Vec<String>,
    /// Columns to read as numeric.
    #[arg(long, value_delimiter = ',')]
    numeric: Vec<String>,
    /// Columns to drop.
    #[arg(long, value_delimiter = ',')]
    ignore: Vec<String>,
}

#[derive(Args, Clone)]
struct TreeArgs {
    #[arg(long, default_value_t = 20)]
    min_leaf_size: usize,
    #[arg(long)]
    max_leaves: Option<usize>,
    /// Cuts scanned per numeric column before local refinement; 0 scans all.
    #[arg(long, default_value_t = 256)]
    scan_cuts: usize,
    /// Folds for penalty selection.
    #[arg(long, default_value_t = 5, conflicts_with = "test_fraction")]
    folds: usize,
    /// Select the penalty on a held-out fraction instead of by folds.
    #[arg(long)]
    test_fraction: Option<f64>,
    /// Seed of the fold or test-sample assignment.
    #[arg(long, default_value_t = 0)]
    cv_seed: u64,
    /// Candidate penalties; by default built from the pruning path.
    #[arg(long, value_delimiter = ',')]
    lambdas: Vec<f64>,
}

#[derive(Args)]
#[group(id = "threshold", required = true, multiple = false)]
struct ThresholdArgs {
    /// Absolute threshold.
    #[arg(long, group = "threshold")]
    threshold_u: Option<f64>,
    /// Threshold as an empirical quantile level of the response.
    #[arg(long, group = "threshold")]
    threshold_q: Option<f64>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    threshold: ThresholdArgs,
    #[command(flatten)]
    tree: TreeArgs,
    /// Directory receiving tree.json, tree.dot and leaves.csv.
    #[arg(long)]
    out_dir: PathBuf,
    /// Multiply σ̂ by this factor in the DOT labels.
    #[arg(long)]
    sigma_scale: Option<f64>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    tree: PathBuf,
    #[arg(long)]
    query: PathBuf,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Design {
    Step,
    Smooth,
    /// Synthetic table with the flood-cost schema.
    Flood,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    design: Design,
    /// Sample sizes before thresholding (rows for the flood table).
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    tree: TreeArgs,
    /// Directory receiving replications.csv and summary.csv, or
    /// flood_synthetic.csv.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
#[group(id = "grid", required = true, multiple = false)]
struct GridArgs {
    /// Quantile levels of the response.
    #[arg(long, value_delimiter = ',', group = "grid")]
    quantiles: Vec<f64>,
    /// Absolute thresholds.
    #[arg(long, value_delimiter = ',', group = "grid")]
    thresholds: Vec<f64>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    tree: TreeArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    tree: PathBuf,
    #[arg(long)]
    dot: Option<PathBuf>,
    /// Rewrite the document in canonical form.
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long)]
    sigma_scale: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("GPT_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        gptree::par::init_threads(n);
    }
    let result = match cli.command {
        Command::Fit(a) => commands::fit(a),
        Command::Predict(a) => commands::predict(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Export(a) => commands::export(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
