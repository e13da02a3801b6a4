mod args;
mod commands;
mod svg;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use commands::{Context, FileConfig, Outcome};

fn run(cli: Cli) -> Outcome {
    let config = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    nriqa::par::init_global_pool(cli.threads);
    let ctx = Context {
        seed: cli.seed,
        verbose: cli.verbose,
        config,
    };
    match &cli.command {
        Command::Extract(a) => commands::extract(&ctx, a),
        Command::Train(a) => commands::train(&ctx, a),
        Command::Predict(a) => commands::predict(&ctx, a),
        Command::Evaluate(a) => commands::evaluate(&ctx, a),
        Command::Synth(a) => commands::synth(&ctx, a),
        Command::IngestLive(a) => commands::ingest_live(&ctx, a),
        Command::Bench(a) => commands::bench(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
