//! `singtech` command-line interface.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on usage errors.

mod commands;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "singtech",
    version,
    about = "Singing technique detection toolkit",
    propagate_version = true
)]
struct Cli {
    /// Worker threads for data-parallel stages (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print descriptive statistics for an annotated corpus.
    Stats(commands::StatsArgs),
    /// Write feature caches (log-mel + optional pitchgram) per track.
    Featurize(commands::FeaturizeArgs),
    /// Generate a synthetic annotated corpus with audio.
    Synth(commands::SynthArgs),
    /// Plan singer-disjoint cross-validation folds.
    Split(commands::SplitArgs),
    /// Train a detector from a run config file.
    Train(commands::TrainArgs),
    /// Predict technique events for every track of a corpus.
    Predict(commands::PredictArgs),
    /// Score predicted events against reference annotations.
    Eval(commands::EvalArgs),
    /// Run the cross-validation condition grid from a config file.
    Experiment(commands::ExperimentArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    #[cfg(feature = "parallel")]
    if cli.jobs > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global()
        {
            eprintln!("error: could not configure {} worker threads: {e}", cli.jobs);
            return ExitCode::FAILURE;
        }
    }
    let result = match cli.command {
        Command::Stats(args) => commands::stats(args),
        Command::Featurize(args) => commands::featurize(args),
        Command::Synth(args) => commands::synth(args),
        Command::Split(args) => commands::split(args),
        Command::Train(args) => commands::train(args),
        Command::Predict(args) => commands::predict(args),
        Command::Eval(args) => commands::eval(args),
        Command::Experiment(args) => commands::experiment(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
