//! Command-line pipeline for the modular-arm experiments: collect data,
//! train a controller, evaluate estimation accuracy, run closed-loop
//! control tasks, and consolidate reports. A declarative TOML config
//! drives every stage; flags only override single keys.

mod commands;
mod config;
mod manifest;

use clap::{Parser, Subcommand};

use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "modarm", version, about = "Modular soft-arm experiment pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Drive the surrogate plant with an excitation schedule and write the
    /// dataset.
    Collect {
        #[arg(long)]
        config: PathBuf,
        /// Override `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override `collect.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Override `collect.n_samples`.
        #[arg(long)]
        n_samples: Option<usize>,
    },
    /// Train the configured network on a dataset and write the model plus
    /// loss-curve and estimation tables.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override `network.epochs`.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Evaluate a saved model's action-estimation error on a dataset.
    EvalEstimation {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the configured control tasks closed-loop and write run logs and
    /// the error report. Exits 3 if any configured threshold is missed.
    Control {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Merge the run logs in a run directory into consolidated tables and
    /// plot-data files.
    Report {
        #[arg(long)]
        run_dir: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::Collect {
            config,
            out,
            seed,
            n_samples,
        } => {
            let mut loaded = config::load_config(&config)?;
            if let Some(s) = seed {
                loaded.config.collect.seed = s;
            }
            if let Some(n) = n_samples {
                loaded.config.collect.n_samples = n;
            }
            commands::cmd_collect(&loaded, out)?;
            Ok(0)
        }
        Command::Train {
            config,
            dataset,
            out,
            epochs,
        } => {
            let mut loaded = config::load_config(&config)?;
            if let Some(e) = epochs {
                loaded.config.network.epochs = e;
            }
            commands::cmd_train(&loaded, &dataset, out)?;
            Ok(0)
        }
        Command::EvalEstimation {
            config,
            model,
            dataset,
            out,
        } => {
            let loaded = config::load_config(&config)?;
            commands::cmd_eval_estimation(&loaded, &model, &dataset, out)?;
            Ok(0)
        }
        Command::Control { config, model, out } => {
            let loaded = config::load_config(&config)?;
            let outcome = commands::cmd_control(&loaded, &model, out)?;
            Ok(if outcome.threshold_missed {
                commands::EXIT_THRESHOLD
            } else {
                0
            })
        }
        Command::Report { run_dir } => {
            commands::cmd_report(&run_dir)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(commands::exit_code_for(&err) as u8)
        }
    }
}
