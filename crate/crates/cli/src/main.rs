//! Command-line driver: regenerates the figure data files and runs the
//! verification suites.

mod config;
mod experiments;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::ExperimentConfig;
use experiments::Runner;

#[derive(Parser)]
#[command(
    name = "ergokit",
    about = "Work statistics of a qubit coupled to a quantum weight: phase-space data, \
             variance-reduction runs, dispersion bounds, and verification suites",
    version
)]
struct Cli {
    /// TOML configuration file; omit for built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for all randomized sampling (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Work-variance phase space: band boundaries and sampled protocol clouds.
    PhaseSpace {
        /// Number of Haar-sampled protocols per cloud.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Iterated variance reduction of a cat-state weight, coherent vs dephased input.
    ReduceVariance,
    /// Lower bound on the final energy dispersion versus extracted coherent ergotropy.
    BoundPlot,
    /// Atoms of the three work distributions for the configured instance.
    Distributions,
    /// Run the verification suites and write a machine-readable report.
    Verify {
        /// Run a single named suite instead of all of them.
        #[arg(long)]
        suite: Option<String>,
        /// Reduced instance counts.
        #[arg(long)]
        quick: bool,
        /// Negative control: corrupt the dephasing phase and expect failure.
        #[arg(long, hide = true)]
        corrupt_gamma_sign: bool,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Ok(threads) = std::env::var("ERGOKIT_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }
    let code = match run(cli) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            2
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<i32, String> {
    let config = ExperimentConfig::load(cli.config.as_deref())?;
    let seed = cli.seed.or(config.seed).unwrap_or(7);
    let runner = Runner::new(config, seed, cli.out)?;
    match cli.command {
        Command::PhaseSpace { samples } => {
            experiments::cmd_phase_space(&runner, samples)?;
            Ok(0)
        }
        Command::ReduceVariance => {
            experiments::cmd_reduce_variance(&runner)?;
            Ok(0)
        }
        Command::BoundPlot => {
            experiments::cmd_bound_plot(&runner)?;
            Ok(0)
        }
        Command::Distributions => {
            experiments::cmd_distributions(&runner)?;
            Ok(0)
        }
        Command::Verify {
            suite,
            quick,
            corrupt_gamma_sign,
        } => {
            let passed =
                experiments::cmd_verify(&runner, suite.as_deref(), quick, corrupt_gamma_sign)?;
            Ok(if passed { 0 } else { 1 })
        }
    }
}
