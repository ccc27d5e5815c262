//! `pointgame`: train text classifiers, explain their predictions and score
//! explanation methods with pointing games.

mod evaluate;
mod explain;
mod failure;
mod files;
mod methods;
mod render;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::failure::Failure;
use crate::methods::MethodArgs;

#[derive(Parser, Debug)]
#[command(
    name = "pointgame",
    version,
    about = "Explanation methods and pointing-game evaluation for text classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a classifier on a JSON-lines corpus or an agreement TSV.
    Train(train::TrainArgs),
    /// Write one relevance record per (document, method).
    Explain(explain::ExplainArgs),
    /// Hybrid-document pointing game.
    EvalHybrid(evaluate::HybridArgs),
    /// Subject-verb agreement pointing game.
    EvalAgreement(evaluate::AgreementArgs),
    /// Turn relevance records into an HTML page or ANSI text.
    Render(render::RenderArgs),
}

/// Which class an explanation targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ClassMode {
    /// The class with the highest probability.
    Predicted,
    /// The class given by `--class`.
    Fixed,
}

/// Flags shared by commands that load a model and run explainers.
#[derive(Args, Debug)]
struct ModelInput {
    /// Checkpoint written by `train`.
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    methods: MethodArgs,
    /// Worker threads for document-level parallelism (0 = all cores).
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Train(args) => train::run(&args),
        Command::Explain(args) => explain::run(&args),
        Command::EvalHybrid(args) => evaluate::run_hybrid(&args),
        Command::EvalAgreement(args) => evaluate::run_agreement(&args),
        Command::Render(args) => render::run(&args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(Failure::USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.code())
        }
    }
}
