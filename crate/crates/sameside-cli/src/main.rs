//! The same-side stance classification pipeline in one binary: ingest,
//! stats, split, build-vocab, hist, train, evaluate, sweep, baseline,
//! gradcheck, plot.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 data error, 3 experiment
//! failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{CmdError, PlotArgs};
use config::{Overrides, RunConfig};

const LONG_VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    "\nfile formats: corpus schema v1 (7 columns), vocab v1 (one token per line),",
    "\n              encoded cache v1 (SSEC), checkpoint v1 (SSCK)"
);

#[derive(Parser)]
#[command(
    name = "sameside",
    version,
    long_version = LONG_VERSION,
    about = "Same-side stance classification toolkit",
    subcommand_required = true,
    arg_required_else_help = true
)]
struct Cli {
    /// Flat key=value config file; every key can be overridden by a flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a corpus, write normalized jsonl.
    Ingest,
    /// Per-topic class statistics (json + markdown).
    Stats,
    /// Seeded train/test split.
    Split,
    /// Build the subword vocabulary from a corpus.
    BuildVocab,
    /// Encoded pair-length histogram (csv + svg) and threshold fractions.
    Hist,
    /// Train the encoder on a corpus, write checkpoint + report.
    Train,
    /// Evaluate a checkpoint on a corpus.
    Evaluate,
    /// Run the (model x length) experiment matrix, write tables + plot.
    Sweep,
    /// Train and evaluate the linear baseline.
    Baseline,
    /// Finite-difference gradient check of the training path.
    Gradcheck,
    /// Re-render plots from results.json (line) or hist.csv (bar).
    Plot {
        /// Input file: results.json for line, hist.csv for bar.
        #[arg(long)]
        input: PathBuf,
        /// Plot kind: line or bar.
        #[arg(long)]
        kind: String,
        /// Output SVG path (default: under out_dir).
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CmdError> {
    let config = RunConfig::resolve(cli.config.as_deref(), &cli.overrides).map_err(|e| {
        CmdError { code: commands::EXIT_USAGE, error: e }
    })?;
    if let Some(jobs) = config.jobs {
        sameside::par::configure_threads(jobs);
    }
    match &cli.command {
        Command::Ingest => commands::cmd_ingest(&config),
        Command::Stats => commands::cmd_stats(&config),
        Command::Split => commands::cmd_split(&config),
        Command::BuildVocab => commands::cmd_build_vocab(&config),
        Command::Hist => commands::cmd_hist(&config),
        Command::Train => commands::cmd_train(&config),
        Command::Evaluate => commands::cmd_evaluate(&config),
        Command::Sweep => commands::cmd_sweep(&config),
        Command::Baseline => commands::cmd_baseline(&config),
        Command::Gradcheck => commands::cmd_gradcheck(&config),
        Command::Plot { input, kind, output } => commands::cmd_plot(
            &config,
            &PlotArgs { input: input.clone(), kind: kind.clone(), output: output.clone() },
        ),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => commands::EXIT_USAGE,
            };
            let _ = err.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CmdError { code, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(code as u8)
        }
    }
}
