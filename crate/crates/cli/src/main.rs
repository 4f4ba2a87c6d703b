//! `faithtrace`: synthesize fixtures, train aligners, explain predictions,
//! evaluate explanation methods and generate concept banks.

mod cmd;
mod exit;
mod manifest;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "faithtrace",
    version,
    about = "Faithful textual explanations in classifier feature space"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a deterministic synthetic world (aligner data, head, samples).
    Synth(cmd::synth::Args),
    /// Fit the affine aligner by ridge least squares.
    TrainAligner(cmd::train::Args),
    /// Rank a concept bank for one feature row.
    Explain(cmd::explain::Args),
    /// Score explanation methods over a directory of samples.
    Evaluate(cmd::evaluate::Args),
    /// Populate a concept list from a chat endpoint or a mock script.
    GenBank(cmd::genbank::GenArgs),
    /// Pair generated concepts with precomputed text embeddings.
    AttachEmbeddings(cmd::genbank::AttachArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => cmd::synth::run(a),
        Command::TrainAligner(a) => cmd::train::run(a),
        Command::Explain(a) => cmd::explain::run(a),
        Command::Evaluate(a) => cmd::evaluate::run(a),
        Command::GenBank(a) => cmd::genbank::run_gen(a),
        Command::AttachEmbeddings(a) => cmd::genbank::run_attach(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit::code_for(&err) as u8)
        }
    }
}
