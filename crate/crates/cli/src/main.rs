//! `migcast`: ingest, generate, train, evaluate and query the migration
//! forecasting and causal-analysis pipeline.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use migcast_core::data::Stream;
use migcast_core::models::Variant;
use migcast_core::Error;

#[derive(Debug, Parser)]
#[command(name = "migcast", version, about = "Migration forecasting and causal what-if analysis")]
pub struct Cli {
    /// Seed for every random choice (data generation, initialization, shuffling).
    #[arg(long, global = true, default_value_t = 2023)]
    pub seed: u64,
    /// Directory receiving all output files.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Causal network parameter file (TOML); defaults to the built-in published snapshot.
    #[arg(long, global = true)]
    pub network: Option<PathBuf>,
    /// Run configuration (TOML with [synthetic], [model], [training], [metrics]).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a CSV and write it back in canonical form as dataset.csv.
    Ingest { csv: PathBuf },
    /// Write a synthetic dataset as synthetic.csv.
    GenSynth {
        #[arg(long, default_value_t = 96)]
        months: usize,
    },
    /// Estimate causal network parameters from a dataset; writes network.toml.
    Fit { dataset: PathBuf },
    /// Train one model on every province's Total series; writes model.json and loss.csv.
    Train {
        dataset: PathBuf,
        #[arg(long, default_value = "autoformer", value_parser = parse_variant)]
        variant: Variant,
        #[arg(long, default_value_t = 5)]
        context_years: usize,
    },
    /// Forecast the 12 months after the data for each province; writes forecast.csv.
    Forecast {
        dataset: PathBuf,
        /// Load this checkpoint instead of training.
        #[arg(long, conflicts_with = "train")]
        checkpoint: Option<PathBuf>,
        /// Train a fresh model before forecasting.
        #[arg(long)]
        train: bool,
        #[arg(long, default_value = "autoformer", value_parser = parse_variant)]
        variant: Variant,
        #[arg(long, default_value_t = 5)]
        context_years: usize,
        /// Turn each forecast into Total evidence and query the causal network.
        #[arg(long)]
        handoff: bool,
    },
    /// Train and score every (variant, context length) cell; writes grid.csv, grid.txt, baseline.csv.
    EvalGrid { dataset: PathBuf },
    /// Posterior report for a set of findings.
    Infer {
        /// Finding such as `province=ON` or `refugee=N(15,2)`; repeatable.
        #[arg(long, short)]
        evidence: Vec<String>,
        /// Node whose posterior mixture to report; repeatable (default: total).
        #[arg(long, value_parser = parse_stream)]
        node: Vec<Stream>,
        /// Province masses below this are pooled into one display row.
        #[arg(long, default_value_t = 0.001)]
        threshold: f64,
    },
    /// Canned what-if scenarios; writes into <out>/<case>/.
    Scenario {
        case: Case,
        #[arg(long, default_value_t = 0.001)]
        threshold: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Case {
    Case1,
    Case2,
    Case3,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse()
}

fn parse_stream(s: &str) -> Result<Stream, String> {
    s.parse()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Evidence(_) | Error::Config(_)) => 2,
        Some(e) if e.is_data_error() => 3,
        Some(_) => 4,
        None => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
