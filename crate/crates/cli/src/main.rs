//! Command line front end for the acoustic scene classification toolkit.
//!
//! `asc` wires the library's pieces into reproducible pipeline runs: single
//! and K-fold ensemble training, prediction, probability fusion, pseudo-label
//! self-training, divergence-balanced dataset splitting, submission scoring,
//! a journaled leaderboard, and toggle-combination ablation tables. Exit
//! codes: 0 on success, 1 on a domain error, 2 on a usage error.

mod commands;
mod config;
mod pipeline;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "asc", version, about = "Acoustic scene classification pipelines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one classifier on a labeled manifest.
    Train(commands::train::TrainArgs),
    /// Predict probabilities and labels with a trained model directory.
    Predict(commands::predict::PredictArgs),
    /// Fuse several probability files into one prediction set.
    Fuse(commands::fuse::FuseArgs),
    /// Train a group-exclusive K-fold ensemble.
    Kfold(commands::kfold::KfoldArgs),
    /// Pseudo-label self-training on a partially labeled manifest.
    Ssl(commands::ssl::SslArgs),
    /// Divergence-balanced development/evaluation split of a dataset.
    Balance(commands::balance::BalanceArgs),
    /// Score a submission against a truth table.
    Score(commands::score::ScoreArgs),
    /// Submit to a journaled public/private leaderboard.
    Submit(commands::submit::SubmitArgs),
    /// Toggle-combination ablation tables.
    Ablation(commands::ablation::AblationArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(args) => commands::train::run(args),
        Command::Predict(args) => commands::predict::run(args),
        Command::Fuse(args) => commands::fuse::run(args),
        Command::Kfold(args) => commands::kfold::run(args),
        Command::Ssl(args) => commands::ssl::run(args),
        Command::Balance(args) => commands::balance::run(args),
        Command::Score(args) => commands::score::run(args),
        Command::Submit(args) => commands::submit::run(args),
        Command::Ablation(args) => commands::ablation::run(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
