//! `svdformer`: train, evaluate and inspect direction-aware spectral GNNs.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data or I/O error,
//! 4 numerical failure (non-finite loss, SVD non-convergence, gradient check
//! above threshold).

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use svdformer::error::ErrorKind;

#[derive(Parser, Debug)]
#[command(name = "svdformer", version, about = "SVD-based spectral graph transformer for directed graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one model per seed; writes checkpoint.json, history.csv and report.json per seed
    /// under <output>/<config-hash>-seed<seed>/ and an aggregate report for the seed list.
    Train {
        /// Run configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Maximum number of seeds trained concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Output directory; overrides SVDFORMER_OUTPUT_DIR and the config's output.directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the dataset of a run configuration and emit metrics JSON.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Run configuration whose dataset block is evaluated.
        #[arg(long)]
        config: PathBuf,
        /// Split to evaluate: train, val, test or all.
        #[arg(long, default_value = "all")]
        split: String,
        /// Write the metrics here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decompose a normalized graph adjacency (or a dense CSV matrix) and dump U, sigma, V.
    Svd {
        /// Edge list (src<TAB>dst); the normalized adjacency is decomposed.
        #[arg(long, conflicts_with = "matrix", required_unless_present = "matrix")]
        edges: Option<PathBuf>,
        /// Node count of the edge list.
        #[arg(long, requires = "edges")]
        num_nodes: Option<usize>,
        /// Dense matrix as headerless CSV, decomposed as is.
        #[arg(long)]
        matrix: Option<PathBuf>,
        /// Keep only the top RANK triplets using the randomized solver.
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long, default_value_t = 10)]
        oversample: usize,
        #[arg(long, default_value_t = 2)]
        power_iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for U.csv, sigma.csv and V.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample a directed stochastic block model and write edges.tsv, features.csv,
    /// labels.txt and splits.json.
    GenData {
        /// Generator parameters (JSON object of the synthetic `params` block).
        #[arg(long)]
        params: PathBuf,
        /// Overrides the seed in the parameter file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 20)]
        per_class_train: usize,
        #[arg(long, default_value_t = 500)]
        val_size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare tape gradients with central differences on a tiny model
    /// (12 nodes, width 8, 2 heads, rank 6, 2 filters, 1 layer).
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Finite-difference step.
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
        /// Largest acceptable relative error.
        #[arg(long, default_value_t = 1e-4)]
        threshold: f64,
    },
    /// Aggregate per-seed report.json files into a mean ± std table (text and CSV).
    Report {
        /// Per-seed reports written by `train`.
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// Directory for summary.txt and summary.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<svdformer::Error>() {
            return match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Data => 3,
                ErrorKind::Numerical => 4,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
        if cause.downcast_ref::<commands::GradCheckFailed>().is_some() {
            return 4;
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { config, jobs, out } => commands::train(&config, jobs, out),
        Command::Eval { checkpoint, config, split, out } => {
            commands::eval(&checkpoint, &config, &split, out.as_deref())
        }
        Command::Svd { edges, num_nodes, matrix, rank, oversample, power_iters, seed, out } => {
            commands::svd(commands::SvdArgs {
                edges,
                num_nodes,
                matrix,
                rank,
                oversample,
                power_iters,
                seed,
                out,
            })
        }
        Command::GenData { params, seed, per_class_train, val_size, out } => {
            commands::gen_data(&params, seed, per_class_train, val_size, &out)
        }
        Command::Gradcheck { seed, eps, threshold } => commands::gradcheck(seed, eps, threshold),
        Command::Report { reports, out } => commands::report(&reports, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            log::error!("{err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
