//! `optbin` — reproducible option-price binning experiments.
//!
//! Five commands drive the pipeline end to end: `ingest` turns raw CSVs
//! into a dataset artifact, `train` fits a learner, `evaluate` scores it,
//! `sweep` charts its error metric against simulated volatilities, and
//! `binwidth-study` retrains across bin widths. Settings come from a JSON
//! config overridden by flags; identical settings and seed reproduce
//! byte-identical numeric artifacts.
//!
//! Exit codes: 0 success, 1 validation error, 2 I/O error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{ExperimentConfig, Learner};

#[derive(Parser)]
#[command(name = "optbin", version, about = "Binned option-price prediction pipeline")]
struct Cli {
    /// JSON experiment config; omitted keys take built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory all artifacts are written to.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Root random seed; every stage derives its own stream from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, join, filter, and split raw CSVs into a dataset artifact.
    Ingest {
        /// Underlying OHLC series (date,open,high,low,close).
        #[arg(long)]
        underlying: Option<PathBuf>,
        /// Option quotes (date,expiry,strike,close,prev_close,volume).
        #[arg(long)]
        options: Option<PathBuf>,
        /// Bond-yield series (date,rate).
        #[arg(long)]
        yields: Option<PathBuf>,
        /// Fraction of dates assigned to the training split.
        #[arg(long)]
        train_fraction: Option<f64>,
    },
    /// Train a learner on the pooled train splits of dataset artifacts.
    Train {
        /// Dataset artifact; repeat to pool several.
        #[arg(long = "data")]
        data: Vec<PathBuf>,
        /// Feature approach: 1, 2, or 3.
        #[arg(long)]
        approach: Option<u8>,
        #[arg(long, value_enum)]
        learner: Option<Learner>,
    },
    /// Score a trained model on a dataset's test split.
    Evaluate {
        /// Model artifact written by `train`.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Dataset artifact whose test split is scored.
        #[arg(long = "data")]
        data: Option<PathBuf>,
    },
    /// Chart the model's error metric against simulated volatilities.
    Sweep {
        /// Model artifact written by `train` (approach 1).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Comma-separated test volatilities, strictly increasing.
        #[arg(long, value_delimiter = ',')]
        sigma_grid: Option<Vec<f64>>,
        /// Independent paths averaged per grid point.
        #[arg(long)]
        repetitions: Option<usize>,
    },
    /// Retrain across bin widths and chart the error metric.
    BinwidthStudy {
        /// Dataset artifact (exactly one).
        #[arg(long = "data")]
        data: Option<PathBuf>,
        /// Comma-separated bin widths to try.
        #[arg(long, value_delimiter = ',')]
        widths: Option<Vec<f64>>,
        /// Feature approach: 1, 2, or 3.
        #[arg(long)]
        approach: Option<u8>,
        #[arg(long, value_enum)]
        learner: Option<Learner>,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut config = ExperimentConfig::load(cli.config.as_deref())?;
    if let Some(out) = cli.out {
        config.out = out;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    match cli.command {
        Command::Ingest { underlying, options, yields, train_fraction } => {
            if let Some(path) = underlying {
                config.underlying = Some(path);
            }
            if let Some(path) = options {
                config.options = Some(path);
            }
            if let Some(path) = yields {
                config.yields = Some(path);
            }
            if let Some(fraction) = train_fraction {
                config.train_fraction = fraction;
            }
            commands::ingest(&config)
        }
        Command::Train { data, approach, learner } => {
            if !data.is_empty() {
                config.datasets = data;
            }
            if let Some(approach) = approach {
                config.approach = approach;
            }
            if let Some(learner) = learner {
                config.learner = learner;
            }
            commands::train(&config)
        }
        Command::Evaluate { model, data } => {
            if let Some(path) = model {
                config.model = Some(path);
            }
            if let Some(path) = data {
                config.dataset = Some(path);
            }
            commands::evaluate(&config)
        }
        Command::Sweep { model, sigma_grid, repetitions } => {
            if let Some(path) = model {
                config.model = Some(path);
            }
            if let Some(grid) = sigma_grid {
                config.sweep.sigma_grid = grid;
            }
            if let Some(reps) = repetitions {
                config.sweep.repetitions = reps;
            }
            commands::sweep(&config)
        }
        Command::BinwidthStudy { data, widths, approach, learner } => {
            if let Some(path) = data {
                config.datasets = vec![path];
            }
            if let Some(widths) = widths {
                config.widths = widths;
            }
            if let Some(approach) = approach {
                config.approach = approach;
            }
            if let Some(learner) = learner {
                config.learner = learner;
            }
            commands::binwidth_study(&config)
        }
    }
}

/// 2 when any cause in the chain is an I/O failure, otherwise 1.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if matches!(cause.downcast_ref::<optbin::Error>(), Some(optbin::Error::Io { .. })) {
            return 2;
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // --help and --version land here with non-error kinds.
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
