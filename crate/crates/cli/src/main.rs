use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use incfl::harness::{self, ExperimentConfig, PlotPlan};

/// Thread-count override for the worker pool.
const THREADS_ENV: &str = "INCFL_THREADS";

#[derive(Parser)]
#[command(
    name = "incfl",
    version,
    about = "In-network computation experiments for federated learning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its CSV files.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Replace the config's root seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the config once per value of a dotted parameter, e.g. `topology.users`.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        param: String,
        /// Comma-separated TOML values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        /// Output CSV file; defaults to `sweep.csv` in the working directory.
        #[arg(long, default_value = "sweep.csv")]
        out: PathBuf,
    },
    /// Run the oracle suites; exits with status 2 if any fails.
    Verify {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Write per-figure long-format CSV files.
    PlotData {
        /// Base config; the built-in reference setup when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// User counts for the latency and traffic figures.
        #[arg(long, value_delimiter = ',')]
        users: Option<Vec<usize>>,
    },
}

enum Failure {
    Config(anyhow::Error),
    Verification,
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Config(e)
    }
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(value) = std::env::var(THREADS_ENV) {
        let n: usize = value
            .parse()
            .with_context(|| format!("{THREADS_ENV} must be a positive integer, got `{value}`"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    Ok(())
}

fn load(path: &Path) -> anyhow::Result<ExperimentConfig> {
    ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    configure_threads()?;
    match cli.command {
        Command::Run { config, out, seed } => {
            let mut config = load(&config)?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            let output = harness::run_experiment(&config, &out).context("running experiment")?;
            println!(
                "wrote {} result rows to {}",
                output.rows.len(),
                out.display()
            );
        }
        Command::Sweep {
            config,
            param,
            values,
            out,
        } => {
            let config = load(&config)?;
            let rows = harness::run_sweep(&config, &param, &values).context("running sweep")?;
            harness::write_results(&out, &rows).context("writing sweep results")?;
            println!("wrote {} result rows to {}", rows.len(), out.display());
        }
        Command::Verify { seed } => {
            let report =
                harness::verify::run_verification(seed).context("running oracle suites")?;
            for c in &report.checks {
                println!(
                    "{} {}: {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
            }
            if !report.all_passed() {
                return Err(Failure::Verification);
            }
        }
        Command::PlotData { config, out, users } => {
            let base = match config {
                Some(path) => load(&path)?,
                None => ExperimentConfig::reference(),
            };
            let mut plan = PlotPlan::default();
            if let Some(users) = users {
                plan.users = users;
            }
            harness::write_plot_data(&base, &plan, &out).context("writing plot data")?;
            println!("wrote figure data to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Verification) => {
            eprintln!("verification failed");
            ExitCode::from(2)
        }
    }
}
