//! `crosse`: prepare data, train, evaluate and explain.

mod commands;
mod manifest;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "crosse",
    version,
    about = "Knowledge graph embeddings with crossover interactions"
)]
struct Cli {
    /// Log level filter, e.g. `info` or `debug`.
    #[arg(long, global = true, default_value = "info")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Index TSV splits into dictionaries and a binary triple cache.
    Prep(commands::prep::Args),
    /// Train a model and write checkpoints, a loss log and a run manifest.
    Train(commands::train::Args),
    /// Rank test triples and report MR, MRR and Hit@k.
    Eval(commands::eval::Args),
    /// Search path explanations and their supports.
    Explain(commands::explain::Args),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .parse_filters(&cli.log)
        .format_timestamp(None)
        .init();
    let result = match cli.command {
        Command::Prep(args) => commands::prep::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Explain(args) => commands::explain::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
