//! `wettingsim` command-line driver.

mod config;
mod fit;
mod oracle;
mod output;
mod simulate;
mod substrate_cmd;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wettingsim::Distribution;

use crate::config::{ConfigError, ExperimentConfig};

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "wettingsim", version = output_version(), about = "SOS film over a random substrate: simulate, fit, check")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn output_version() -> &'static str {
    Box::leak(output::version().into_boxed_str())
}

#[derive(Subcommand)]
enum Command {
    /// Run every (J, K) point over all replicas and write correlation CSVs.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `runtime.threads` and WETTINGSIM_THREADS.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Fit every `correlation_*.csv` in a directory.
    Fit {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exact periodic values for small N, optionally against a simulation.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// A `simulate` output directory; overrides `oracle.compare`.
        #[arg(long)]
        compare: Option<PathBuf>,
    },
    /// Generate or inspect substrate files.
    Substrate {
        #[command(subcommand)]
        action: SubstrateAction,
    },
}

#[derive(Subcommand)]
enum SubstrateAction {
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = "exp_mean_one")]
        distribution: Distribution,
        #[arg(long)]
        out: PathBuf,
    },
    Inspect {
        path: PathBuf,
        /// Autocovariance lags to print.
        #[arg(long, default_value_t = 5)]
        lags: usize,
    },
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simulate { config, out, threads } => {
            let cfg = ExperimentConfig::load(&config)?;
            simulate::run(&cfg, simulate::SimulateArgs { out, threads })
        }
        Command::Fit { input, out } => fit::run(&input, &out),
        Command::Oracle { config, out, compare } => {
            let cfg = ExperimentConfig::load(&config)?;
            oracle::run(&cfg, oracle::OracleArgs { out, compare })
        }
        Command::Substrate { action } => match action {
            SubstrateAction::Gen {
                n,
                seed,
                distribution,
                out,
            } => {
                if n == 0 {
                    return Err(config::config_error("--n: must be at least 1"));
                }
                substrate_cmd::generate(n, seed, distribution, &out)
            }
            SubstrateAction::Inspect { path, lags } => {
                print!("{}", substrate_cmd::inspect(&path, lags)?);
                Ok(())
            }
        },
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::from(EXIT_RUNTIME)
            }
        }
    }
}
