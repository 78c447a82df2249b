//! `clic`: generate cross-link interference datasets, fit and compare cancellers.

mod commands;
mod config;
mod error;
mod tables;

use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use clic_core::harness::CancellerKind;

use crate::commands::{Axis, Context};
use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "clic", version, about = "Cross-link interference simulation and cancellation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed, overriding the configured one.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, env = "CLIC_OUT_DIR")]
    out: Option<PathBuf>,
    /// Overwrite existing artifacts.
    #[arg(long)]
    force: bool,
}

impl Common {
    fn context(&self) -> Result<Context, CliError> {
        Context::new(self.config.as_deref(), self.seed, self.out.clone(), self.force)
    }
}

fn parse_kind(s: &str) -> Result<CancellerKind, String> {
    s.parse().map_err(|e: clic_core::Error| e.to_string())
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a clean-period capture and save it as a dataset file.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Dataset file to write instead of the configured one.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Fit cancellers on a dataset and append their rows to the results table.
    Run {
        #[command(flatten)]
        common: Common,
        /// Comma-separated cancellers among tc, pc, nnc, hc (default: all).
        #[arg(long, value_delimiter = ',', value_parser = parse_kind)]
        canceller: Vec<CancellerKind>,
        /// Dataset file; generated from the config when it does not exist.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Tabulate parameter and complexity counts over P or the hidden width.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// P (PC order) or Nh (hidden nodes).
        #[arg(long, value_parser = Axis::parse)]
        axis: Axis,
        /// `1,3,5,7` or an inclusive range `a..b[:step]`.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        /// nnc or hc for the Nh axis (default nnc).
        #[arg(long, value_parser = parse_kind)]
        canceller: Option<CancellerKind>,
        /// Also fit every value and record its cancellation.
        #[arg(long)]
        evaluate: bool,
        /// Worker threads for evaluated sweeps.
        #[arg(long)]
        jobs: Option<usize>,
        /// Dataset for evaluated sweeps; generated when it does not exist.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Summarize a results table and export plot data.
    Report {
        #[command(flatten)]
        common: Common,
        /// Results table (default: the configured one in the output directory).
        #[arg(long)]
        results: Option<PathBuf>,
    },
    /// Print the default configuration.
    Config,
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate { common, dataset } => commands::generate(&common.context()?, dataset.as_deref()),
        Command::Run {
            common,
            canceller,
            dataset,
        } => {
            let kinds = if canceller.is_empty() {
                CancellerKind::ALL.to_vec()
            } else {
                let mut k = canceller;
                k.dedup();
                k
            };
            commands::run(&common.context()?, &kinds, dataset.as_deref())
        }
        Command::Sweep {
            common,
            axis,
            values,
            canceller,
            evaluate,
            jobs,
            dataset,
        } => commands::sweep(
            &common.context()?,
            axis,
            &values,
            canceller,
            evaluate,
            jobs,
            dataset.as_deref(),
        ),
        Command::Report { common, results } => commands::report(&common.context()?, results.as_deref()),
        Command::Config => {
            println!("{}", RunConfig::default().to_json());
            Ok(())
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return;
        }
        Err(e) => {
            let message = if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                "a subcommand is required: generate, run, sweep, report or config".to_string()
            } else {
                let text = e.to_string();
                let first = text.lines().next().unwrap_or_default();
                first.trim_start_matches("error: ").to_string()
            };
            let err = CliError::Usage(message);
            eprintln!("error: {}", err.one_line());
            std::process::exit(err.exit_code());
        }
    };
    if let Err(err) = execute(cli) {
        eprintln!("error: {}", err.one_line());
        std::process::exit(err.exit_code());
    }
}
