//! `meda` — command-line front end for manifold-embedded distribution
//! alignment.
//!
//! Verbs: `run` (one adaptation task), `sweep` (grid over
//! hyperparameters), `bench` (synthetic suite or a directory of task
//! pairs). Exit codes: 0 success, 2 parse/config, 3 dimension,
//! 4 numerical, 5 I/O.

mod bench;
mod config;
mod output;
mod run;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use meda::{ErrorCategory, MedaError};

#[derive(Parser, Debug)]
#[command(name = "meda", version, about = "Domain adaptation via manifold-embedded distribution alignment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a single adaptation task and emit a JSON result.
    Run(RunArgs),
    /// Run a Cartesian grid of hyperparameter settings on one task.
    Sweep(SweepArgs),
    /// Run a benchmark suite: synthetic tasks or a directory of pairs.
    Bench(BenchArgs),
}

/// Flags shared by every verb; all of them may also be given through a
/// `key = value` config file (command-line flags win).
#[derive(Args, Debug, Default, Clone)]
pub struct CommonArgs {
    /// Key-value config file supplying any of the long flags.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Source-domain feature file.
    #[arg(long)]
    source: Option<PathBuf>,
    /// Target-domain feature file.
    #[arg(long)]
    target: Option<PathBuf>,
    /// Input format: dense | dense-raw | sparse.
    #[arg(long)]
    format: Option<String>,
    /// Target file format when it differs from --format.
    #[arg(long)]
    target_format: Option<String>,

    /// Generate a synthetic task instead of loading files:
    /// noshift | marginal | conditional | moderate.
    #[arg(long)]
    synthetic: Option<String>,
    /// Synthetic: number of classes.
    #[arg(long)]
    syn_classes: Option<usize>,
    /// Synthetic: feature dimension.
    #[arg(long)]
    syn_dim: Option<usize>,
    /// Synthetic: samples per class per domain.
    #[arg(long)]
    syn_n: Option<usize>,
    /// Synthetic: cluster noise σ.
    #[arg(long)]
    syn_noise: Option<f64>,
    /// Synthetic: marginal shift magnitude (marginal preset) or drift
    /// fraction (conditional preset).
    #[arg(long)]
    syn_shift: Option<f64>,

    /// Feature normalization: none | zscore | unit-l2.
    #[arg(long)]
    normalization: Option<String>,
    /// Manifold subspace dimension d.
    #[arg(short, long)]
    d: Option<usize>,
    /// Neighbor count p for the graph Laplacian.
    #[arg(short, long)]
    p: Option<usize>,
    /// MMD alignment weight λ.
    #[arg(long)]
    lambda: Option<f64>,
    /// Ridge weight η.
    #[arg(long)]
    eta: Option<f64>,
    /// Laplacian weight ρ.
    #[arg(long)]
    rho: Option<f64>,
    /// Maximum refinement iterations T.
    #[arg(long)]
    t_max: Option<usize>,
    /// Adaptive factor mode: estimate | fixed:<v> | grid.
    #[arg(long)]
    mu_mode: Option<String>,
    /// Kernel family: rbf | linear.
    #[arg(long)]
    kernel: Option<String>,
    /// RBF bandwidth: auto | <positive float>.
    #[arg(long)]
    bandwidth: Option<String>,
    /// RNG seed (defaults to a fixed constant for reproducibility).
    #[arg(long)]
    seed: Option<u64>,
    /// Write the JSON result here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Persist the fitted model container here.
    #[arg(long)]
    save_model: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated subspace dimensions to sweep.
    #[arg(long)]
    grid_d: Option<String>,
    /// Comma-separated neighbor counts to sweep.
    #[arg(long)]
    grid_p: Option<String>,
    /// Comma-separated λ values to sweep.
    #[arg(long)]
    grid_lambda: Option<String>,
    /// Comma-separated η values to sweep.
    #[arg(long)]
    grid_eta: Option<String>,
    /// Comma-separated ρ values to sweep.
    #[arg(long)]
    grid_rho: Option<String>,
    /// Comma-separated fixed μ values to sweep.
    #[arg(long)]
    grid_mu: Option<String>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// "synthetic" (default) or a directory of task pairs.
    #[arg(long, default_value = "synthetic")]
    suite: String,
}

fn exit_code_for(err: &MedaError) -> u8 {
    match err.category() {
        ErrorCategory::Parse => 2,
        ErrorCategory::Dimension => 3,
        ErrorCategory::Numerical => 4,
        ErrorCategory::Io => 5,
    }
}

fn init_worker_pool() {
    // MEDA_WORKERS overrides the worker-pool size; nothing else is read
    // from the environment.
    #[cfg(feature = "parallel")]
    if let Ok(raw) = std::env::var("MEDA_WORKERS") {
        match raw.parse::<usize>() {
            Ok(n) if n >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => eprintln!("warning: ignoring invalid MEDA_WORKERS value '{raw}'"),
        }
    }
}

fn main() -> ExitCode {
    init_worker_pool();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run::execute(&args),
        Command::Sweep(args) => sweep::execute(&args),
        Command::Bench(args) => bench::execute(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
