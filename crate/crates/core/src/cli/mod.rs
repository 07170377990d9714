//! The `grag` command line.
//!
//! Every subcommand accepts `--config <file.json>` plus flags named after the
//! config keys; flags win. Exit status is 0 on success, 1 when inputs or
//! settings are invalid and 2 when a command fails while running.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::io::Write;

use clap::{Parser, Subcommand};
use thiserror::Error;

pub use config::{Flags, RunConfig};

/// Environment variable bounding the number of worker threads.
pub const THREADS_ENV: &str = "GRAG_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "grag",
    version,
    about = "AMR document graphs and GCN reranking"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert a directory of Penman files into AMR JSONL (`input_dir`, `out`).
    ParseAmr(Flags),
    /// Build one document graph per question (`dataset`, `amr`, `out_dir`).
    BuildGraphs(Flags),
    /// Train a reranker (`strategy`, `dataset`, `dev_dataset`, `amr`, `out_dir`).
    Train(Flags),
    /// Score documents with a checkpoint (`checkpoint`, `dataset`, `out`).
    Rerank(Flags),
    /// Evaluate a score file against qrels (`scores`, `qrels`).
    Eval(Flags),
    /// Histogram of shortest-path counts per document (`amr`, `qrels`).
    ReportPaths(Flags),
    /// Generate the synthetic corpus (`out_dir`, `synthetic`).
    GenSynthetic(Flags),
}

/// Worker count from `GRAG_THREADS`, else the available parallelism.
pub fn thread_count() -> usize {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .unwrap_or(1),
        Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
    }
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e}");
            e.exit_code()
        }
    }
}

fn execute(command: Command) -> Result<(), CliError> {
    let threads = thread_count();
    match command {
        Command::ParseAmr(f) => commands::parse_amr(&RunConfig::resolve(f)?),
        Command::BuildGraphs(f) => commands::build_graphs(&RunConfig::resolve(f)?, threads),
        Command::Train(f) => commands::train(&RunConfig::resolve(f)?, threads),
        Command::Rerank(f) => commands::rerank(&RunConfig::resolve(f)?, threads),
        Command::Eval(f) => commands::eval(&RunConfig::resolve(f)?),
        Command::ReportPaths(f) => commands::report_paths(&RunConfig::resolve(f)?),
        Command::GenSynthetic(f) => commands::gen_synthetic(&RunConfig::resolve(f)?),
    }
}
