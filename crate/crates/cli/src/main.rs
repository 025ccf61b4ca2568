//! `clkd`: dataset conversion, translation, teacher scoring, training and
//! evaluation for cross-lingual distillation of answer sentence selectors.

mod data;
mod provider;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use clkd_core::error::Result;

#[derive(Parser)]
#[command(
    name = "clkd",
    version,
    about = "Cross-lingual knowledge distillation for answer sentence selection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a source corpus to AS2 JSONL.
    #[command(subcommand)]
    Convert(data::Convert),
    /// Drop train questions without a correct answer.
    FilterTrain(data::FilterTrain),
    /// Seeded question-level train/dev split.
    Split(data::SplitArgs),
    /// Translate a dataset into parallel pairs.
    Translate(data::Translate),
    /// Produce teacher-scores JSONL.
    #[command(subcommand)]
    Teacher(data::Teacher),
    /// Train a student with finetuning or distillation.
    Train(train::TrainArgs),
    /// Select the distillation temperature by dev MAP.
    SweepTau(train::SweepArgs),
    /// Print P@1/MAP/MRR of a checkpoint or teacher scores on a dataset.
    Evaluate(train::EvaluateArgs),
    #[command(subcommand)]
    Baseline(data::Baseline),
    #[command(subcommand)]
    Synth(data::Synth),
}

/// Training-pool inputs shared by `train` and `sweep-tau`.
#[derive(Args, Clone)]
pub struct PoolArgs {
    /// Gold-labeled AS2 JSONL, one file per language (finetune).
    #[arg(long = "data")]
    pub data: Vec<PathBuf>,
    /// ParallelPair JSONL, one file per language (clkd).
    #[arg(long = "pairs")]
    pub pairs: Vec<PathBuf>,
    /// Teacher-scores JSONL keyed by pair id (clkd).
    #[arg(long)]
    pub teacher: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Convert(c) => data::convert(c),
        Command::FilterTrain(a) => data::filter_train(a),
        Command::Split(a) => data::split(a),
        Command::Translate(a) => data::translate(a),
        Command::Teacher(t) => data::teacher(t),
        Command::Train(a) => train::train(a),
        Command::SweepTau(a) => train::sweep(a),
        Command::Evaluate(a) => train::evaluate(a),
        Command::Baseline(b) => data::baseline(b),
        Command::Synth(s) => data::synth(s),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
