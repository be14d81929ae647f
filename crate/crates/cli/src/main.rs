//! `nullrec` command-line front end.
//!
//! Every command validates its inputs and computes its results before the
//! output directory is touched. Failures print one JSON line on stderr.

mod commands;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use failure::Failure;

#[derive(Debug, Parser)]
#[command(name = "nullrec", version, about = "Regeneration algebra and kernel-regression experiments")]
struct Cli {
    /// Worker threads for replicated experiments.
    #[arg(long, global = true, env = "NULLREC_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a process spec (dataset.csv) or a split chain (trajectory.csv).
    Simulate(SimulateArgs),
    /// Kernel estimate on a grid from one simulated dataset (curve.csv).
    Estimate(EstimateArgs),
    /// Run a replicated central-limit protocol (replications and summary CSVs).
    Clt(CltArgs),
    /// Compare algebraic block moments with forward enumeration.
    MomentsCheck(MomentsArgs),
    /// Generalized autocovariances and the long-run variance series.
    Autocov(AutocovArgs),
    /// Embedded W-chain at X-regenerations and compound block moments.
    Embedded(EmbeddedArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Output directory; created if missing.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Numerical tolerance.
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// ProcessSpec JSON.
    #[arg(long, conflicts_with = "chain", required_unless_present = "chain")]
    spec: Option<PathBuf>,
    /// Chain JSON; simulates the split chain.
    #[arg(long)]
    chain: Option<PathBuf>,
    /// Second chain JSON; simulates the independent product with `--chain`.
    #[arg(long, requires = "chain")]
    chain_w: Option<PathBuf>,
    /// Atom halfwidth; with a random-walk `--spec`, also writes trajectory.csv.
    #[arg(long, requires = "spec")]
    halfwidth: Option<f64>,
    /// Number of steps after time 0.
    #[arg(long)]
    n: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    /// ProcessSpec JSON.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    n: usize,
    /// Evaluation grid `lo:hi:count`.
    #[arg(long, allow_hyphen_values = true)]
    grid: String,
    /// Fixed bandwidth.
    #[arg(long, conflicts_with = "c0", required_unless_present = "c0")]
    h: Option<f64>,
    /// Local-bandwidth constant; window is `x ± 2.5`.
    #[arg(long)]
    c0: Option<f64>,
    /// Kernel: `epanechnikov` or `gaussian:<c>`.
    #[arg(long, default_value = "epanechnikov")]
    kernel: String,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct CltArgs {
    /// Protocol JSON, optionally with `sizes`.
    #[arg(long)]
    protocol: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct MomentsArgs {
    #[arg(long)]
    chain: PathBuf,
    /// Function values, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    g: String,
    /// Highest order.
    #[arg(long)]
    m: usize,
    /// Start: `nu` or a state index.
    #[arg(long, default_value = "nu")]
    start: String,
    /// Enumeration depth.
    #[arg(long, default_value_t = 4000)]
    depth: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct AutocovArgs {
    #[arg(long)]
    chain: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    g: String,
    /// Second function; defaults to `g`.
    #[arg(long, allow_hyphen_values = true)]
    f: Option<String>,
    /// Largest lag printed.
    #[arg(long, default_value_t = 10)]
    lags: usize,
    /// Series truncation for the long-run variance.
    #[arg(long, default_value_t = 200)]
    truncation: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct EmbeddedArgs {
    /// Chain driving regenerations.
    #[arg(long)]
    chain: PathBuf,
    /// Chain observed at regenerations.
    #[arg(long)]
    chain_w: PathBuf,
    /// Functions for compound moments, `gx` on `--chain`.
    #[arg(long, allow_hyphen_values = true, requires = "gw")]
    gx: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    gw: Option<String>,
    /// Highest compound order.
    #[arg(long, default_value_t = 2)]
    m: usize,
    /// Tail tolerance of the compound lag series.
    #[arg(long, default_value_t = 1e-10)]
    compound_tol: f64,
    #[command(flatten)]
    common: Common,
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Failure::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Estimate(a) => commands::estimate(a),
        Command::Clt(a) => commands::clt(a),
        Command::MomentsCheck(a) => commands::moments_check(a),
        Command::Autocov(a) => commands::autocov(a),
        Command::Embedded(a) => commands::embedded(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("{}", failure.json_line());
            ExitCode::from(failure.exit_code())
        }
    }
}
