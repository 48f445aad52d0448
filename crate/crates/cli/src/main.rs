//! `suiterank`: batch test-prioritization pipeline over a dataset tree.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use suiterank_cli::commands;
use suiterank_cli::{CliError, PipelineConfig};

#[derive(Parser)]
#[command(
    name = "suiterank",
    version,
    about = "Coverage- and history-driven regression test prioritization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train fault-proneness models and write per-version unit scores
    Predict(RunArgs),
    /// Write one prioritized order file per strategy and version
    Prioritize(RunArgs),
    /// Score order files against outcomes and write the report tables
    Evaluate(RunArgs),
    /// Run predict, prioritize, and evaluate in sequence
    Pipeline(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Pipeline config file (JSON)
    #[arg(long)]
    config: PathBuf,

    /// Restrict to one configured project (repeatable)
    #[arg(long = "project")]
    projects: Vec<String>,

    /// Replace the configured strategy list (comma-separated names)
    #[arg(long, value_delimiter = ',')]
    strategies: Option<Vec<String>>,

    /// Override the configured seed
    #[arg(long)]
    seed: Option<u64>,

    /// Override the configured output directory
    #[arg(long = "out")]
    output_dir: Option<PathBuf>,
}

fn load(args: &RunArgs) -> Result<PipelineConfig, CliError> {
    let mut config = PipelineConfig::load(&args.config)?;
    config.apply_overrides(
        &args.projects,
        args.strategies.as_deref(),
        args.seed,
        args.output_dir.clone(),
    )?;
    Ok(config)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Predict(args) => commands::cmd_predict(&load(&args)?),
        Command::Prioritize(args) => commands::cmd_prioritize(&load(&args)?),
        Command::Evaluate(args) => commands::cmd_evaluate(&load(&args)?),
        Command::Pipeline(args) => commands::cmd_pipeline(&load(&args)?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
