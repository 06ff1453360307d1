use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::{self, Common};
use crate::config::Market;
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Run configuration (`key = value` lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed of every random choice in the run.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// DE (gate closure 30 min before delivery) or AT (0 min).
    #[arg(long, global = true)]
    pub market: Option<Market>,
    /// Price index ID_x, x in 1..=3.
    #[arg(long, global = true, value_parser = clap::value_parser!(u8).range(1..=3))]
    pub index: Option<u8>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic trade stream and its index labels.
    Synth,
    /// Validate a trade CSV and report the samples it yields.
    Ingest {
        #[arg(long)]
        trades: PathBuf,
    },
    /// Train a model and evaluate it on the test partition.
    Train {
        #[arg(long)]
        trades: PathBuf,
    },
    /// Grid search over hidden size, cutoff exponent and interaction degree.
    Gridsearch {
        #[arg(long)]
        trades: PathBuf,
        /// Parallel cells.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Forecast every product in a trade CSV.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        trades: PathBuf,
    },
    /// Metrics and plot data of a checkpoint on a trade CSV.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        trades: PathBuf,
    },
    /// Naive and feature baselines.
    Baseline {
        #[arg(long)]
        trades: PathBuf,
    },
    /// Train and test one ablation variant.
    Ablate {
        #[arg(long)]
        trades: PathBuf,
        #[arg(long)]
        variant: String,
    },
    /// Aggregate result CSVs into a mean ± std table.
    Report {
        /// Result CSVs from `baseline` or `ablate`.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

#[derive(Debug, Parser)]
#[command(name = "orderfusion", version, about = "Probabilistic intraday price index forecasting from buy/sell trade streams")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

pub fn run(common: &Common, command: &Command) -> Result<()> {
    match command {
        Command::Synth => commands::synth(common)?,
        Command::Ingest { trades } => commands::ingest(common, trades)?,
        Command::Train { trades } => commands::train_cmd(common, trades)?,
        Command::Gridsearch { trades, jobs } => commands::gridsearch(common, trades, *jobs)?,
        Command::Predict { checkpoint, trades } => commands::predict(common, checkpoint, trades)?,
        Command::Evaluate { checkpoint, trades } => commands::evaluate(common, checkpoint, trades)?,
        Command::Baseline { trades } => commands::baseline(common, trades)?,
        Command::Ablate { trades, variant } => commands::ablate(common, trades, variant)?,
        Command::Report { inputs } => commands::report(common, inputs)?,
    };
    Ok(())
}

/// Parses `argv` and runs the command; returns the process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let parsed = match Cli::try_parse_from(argv) {
        Ok(p) => p,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let c = parsed.common;
    let common = Common {
        config: c.config,
        seed: c.seed,
        market: c.market,
        index: c.index,
        out: c.out,
    };
    match run(&common, &parsed.command) {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            if let CliError::Usage(_) = e {
                eprintln!("run with --help for usage");
            }
            e.exit_code()
        }
    }
}
