//! `fedsim` — run deterministic federated-learning experiments.
//!
//! Verbs:
//! - `run`: one experiment end to end (pretraining the detector first when
//!   the defense needs one), writing `manifest.json`, `config.json`,
//!   `metrics.jsonl`, `summary.csv`, `model.ckpt`, and `detector.ckpt`.
//! - `sweep`: a one-axis grid of runs (values × seeds), each in its own
//!   subdirectory, plus a combined `sweep.csv`.
//! - `pretrain`: just the detector pretraining, writing `detector.ckpt`.
//!
//! Exit codes: 0 success, 2 invalid configuration or arguments, 3 runtime
//! abort (e.g. a non-finite model).

mod ops;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "fedsim",
    version,
    about = "Deterministic simulator for Byzantine-robust federated learning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment end to end.
    Run(CommonArgs),
    /// Run a one-axis grid of experiments and combine the results.
    Sweep(SweepArgs),
    /// Pretrain the anomaly detector and write its checkpoint.
    Pretrain(CommonArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Experiment config: a JSON object of flat dotted keys.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory (created if missing).
    #[arg(long, value_name = "DIR")]
    out: PathBuf,

    /// Master seed; takes precedence over the config file and --override.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,

    /// Override one config key, e.g. --override xi=0.3 (repeatable).
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,

    /// Config key varied across --values.
    #[arg(long, value_name = "KEY")]
    axis: String,

    /// Comma-separated axis values (JSON scalars or bare strings).
    #[arg(long, value_name = "V1,V2,...", value_delimiter = ',')]
    values: Vec<String>,

    /// Comma-separated master seeds; one run per (value, seed). Defaults to
    /// the config's seed.
    #[arg(long, value_name = "S1,S2,...", value_delimiter = ',')]
    seeds: Vec<u64>,

    /// Maximum number of cells run concurrently.
    #[arg(long, value_name = "N", default_value_t = 1)]
    jobs: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => ops::cmd_run(&args),
        Command::Sweep(args) => ops::cmd_sweep(&args),
        Command::Pretrain(args) => ops::cmd_pretrain(&args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message);
            ExitCode::from(err.code)
        }
    }
}
