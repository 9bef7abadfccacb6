mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{resolve_out_dir, OutputDir};

/// Clipped-optimizer and sharpness experiments on synthetic objectives.
#[derive(Debug, Parser)]
#[command(name = "clipsharp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train with shadow optimizers; writes loss.csv and scheduled probe tables.
    Train(RunArgs),
    /// Train, then probe every shadow direction; writes sharpness, landscape and histogram tables.
    Probe(RunArgs),
    /// Gauss-Newton smoothness before and after coordinate removal.
    GaussNewton(RunArgs),
    /// Check the clipped descent lemma on a theorem instance.
    Lemma(RunArgs),
    /// Loss curves of several algorithms on one problem.
    Compare(RunArgs),
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides CLIPSHARP_OUT and the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
}

type CommandFn = fn(&ExperimentConfig) -> Result<commands::Report, CliError>;

fn execute(command: Command) -> Result<(), CliError> {
    let (args, f): (RunArgs, CommandFn) = match command {
        Command::Train(a) => (a, commands::train),
        Command::Probe(a) => (a, commands::probe),
        Command::GaussNewton(a) => (a, commands::gauss_newton),
        Command::Lemma(a) => (a, commands::lemma),
        Command::Compare(a) => (a, commands::compare),
    };
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let report = f(&cfg)?;
    let dir = resolve_out_dir(args.out.as_deref(), cfg.out.as_deref());
    let out = OutputDir::acquire(&dir)?;
    for (name, table) in &report.tables {
        let path = out.write_csv(name, table)?;
        println!("wrote {}", path.display());
    }
    match report.failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
