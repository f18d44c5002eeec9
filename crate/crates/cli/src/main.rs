//! Command-line harness: scenario generation, posterior inference, influence
//! measurement and coordination sweeps. Every output embeds the tool
//! version, seeds and configuration that produced it, and none carries a
//! timestamp, so reruns are byte-identical.

mod commands;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "ratingsim", version, about = "Malicious rater detection and influence experiments")]
struct Cli {
    /// Worker threads (default: all available cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Engine {
    Is,
    Mh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PredictiveArg {
    Prior,
    Posterior,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw ground truth from a config and simulate the observed rating matrix.
    Generate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Infer maliciousness and targets from a scenario's observed matrix.
    Infer {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum, default_value = "is")]
        engine: Engine,
        /// Traces (is) or steps per chain (mh).
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Independent MH chains, pooled.
        #[arg(long, default_value_t = 1)]
        chains: usize,
        /// Fraction of each MH chain discarded as burn-in.
        #[arg(long, default_value_t = 0.1)]
        burn_in: f64,
        #[arg(long, default_value_t = 1)]
        thin: usize,
        /// Output directory for posterior.csv and summary.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Average JS distance between armed and disarmed predictive ensembles.
    Influence {
        #[arg(long)]
        scenario: PathBuf,
        /// `malicious` (ground truth), `none`, `all`, or a comma-separated user list.
        #[arg(long, default_value = "malicious")]
        mask: String,
        #[arg(long, default_value_t = 1000)]
        n_runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        bins: usize,
        #[arg(long, value_enum, default_value = "prior")]
        predictive: PredictiveArg,
        /// Importance-sampling traces for the posterior-predictive mode.
        #[arg(long, default_value_t = 10_000)]
        is_traces: usize,
        /// Seed for the importance sampler (posterior mode); defaults to --seed.
        #[arg(long)]
        is_seed: Option<u64>,
        /// Output directory for influence.csv and influence.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Influence of disarming the malicious users across a target-spread grid.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        tau_sigma_grid: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        n_seeds: usize,
        #[arg(long, default_value_t = 1000)]
        n_runs: usize,
        #[arg(long, default_value_t = 20)]
        bins: usize,
        /// First sweep seed; defaults to the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for sweep.csv and sweep.json.
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> error::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(error::CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| error::CliError::Config(e.to_string()))?;
    }
    match cli.command {
        Command::Generate { config, seed, out } => commands::generate(&config, seed, &out),
        Command::Infer {
            scenario,
            engine,
            n,
            seed,
            chains,
            burn_in,
            thin,
            out,
        } => commands::infer(&commands::InferArgs {
            scenario,
            engine,
            n,
            seed,
            chains,
            burn_in,
            thin,
            out,
        }),
        Command::Influence {
            scenario,
            mask,
            n_runs,
            seed,
            bins,
            predictive,
            is_traces,
            is_seed,
            out,
        } => commands::influence(&commands::InfluenceArgs {
            scenario,
            mask,
            n_runs,
            seed,
            bins,
            predictive,
            is_traces,
            is_seed: is_seed.unwrap_or(seed),
            out,
        }),
        Command::Sweep {
            config,
            tau_sigma_grid,
            n_seeds,
            n_runs,
            bins,
            seed,
            out,
        } => commands::sweep(&commands::SweepArgs {
            config,
            tau_sigma_grid,
            n_seeds,
            n_runs,
            bins,
            seed,
            out,
        }),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
