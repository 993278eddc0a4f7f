mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Overrides, RunConfig, UsageError};

#[derive(Debug, Parser)]
#[command(name = "turnwise", version, about = "Speaker-turn-aware dialogue act tagging")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print per-split corpus statistics.
    Stats(Overrides),
    /// Show turn relabelling and training chunks for a corpus.
    Preprocess(Overrides),
    /// Train a model and save the best checkpoint.
    Train(Overrides),
    /// Evaluate a checkpoint on one split.
    Eval(Overrides),
    /// Train every turn/topic configuration and tabulate test accuracy.
    Ablate(Overrides),
    /// Train once per chunk size and tabulate test accuracy.
    Sweep(Overrides),
    /// Write a synthetic corpus to --out.
    Synth(Overrides),
}

impl Command {
    fn split(&self) -> (&'static str, &Overrides) {
        match self {
            Command::Stats(o) => ("stats", o),
            Command::Preprocess(o) => ("preprocess", o),
            Command::Train(o) => ("train", o),
            Command::Eval(o) => ("eval", o),
            Command::Ablate(o) => ("ablate", o),
            Command::Sweep(o) => ("sweep", o),
            Command::Synth(o) => ("synth", o),
        }
    }
}

fn run(name: &str, flags: &Overrides) -> anyhow::Result<()> {
    let config = RunConfig::resolve(name, flags)?;
    config.write_snapshot()?;
    match name {
        "stats" => commands::stats(&config),
        "preprocess" => commands::preprocess(&config),
        "train" => commands::train_cmd(&config),
        "eval" => commands::eval(&config),
        "ablate" => commands::ablate(&config),
        "sweep" => commands::sweep(&config),
        "synth" => commands::synth(&config),
        _ => unreachable!("clap only yields known subcommands"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let (name, flags) = cli.command.split();
    match run(name, flags) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
