//! `cpmfit`: fit compressor speedlines with superellipses, predict unseen
//! speedlines and cross-validate the predictions.

mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Outcome;
use config::{CommonArgs, RunConfig, SEED_ENV};

#[derive(Debug, Parser)]
#[command(name = "cpmfit", version, about = "Superellipse speedline fitting and prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit every speedline of a map
    Fit {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Predict one speedline, held out if present in the map
    Predict {
        #[command(flatten)]
        common: CommonArgs,
        /// Speed to predict
        #[arg(long)]
        target: Option<f64>,
    },
    /// Leave-one-out cross-validation over all speedlines
    Crossval {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Compare initialization strategies over repeated fits
    Bench {
        #[command(flatten)]
        common: CommonArgs,
        /// Fits per speedline and strategy
        #[arg(long)]
        repeats: Option<usize>,
    },
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    let env_seed = std::env::var(SEED_ENV).ok();
    let (common, target, repeats) = match &cli.command {
        Command::Fit { common } | Command::Crossval { common } => (common, None, None),
        Command::Predict { common, target } => (common, *target, None),
        Command::Bench { common, repeats } => (common, None, *repeats),
    };
    let mut cfg = RunConfig::resolve(common, env_seed)?;
    if target.is_some() {
        cfg.target = target;
    }
    if let Some(r) = repeats {
        anyhow::ensure!(r >= 1, "--repeats must be at least 1");
        cfg.repeats = r;
    }

    let (artifacts, outcome) = match cli.command {
        Command::Fit { .. } => commands::cmd_fit(&cfg)?,
        Command::Predict { .. } => commands::cmd_predict(&cfg)?,
        Command::Crossval { .. } => commands::cmd_crossval(&cfg)?,
        Command::Bench { .. } => commands::cmd_bench(&cfg)?,
    };
    for path in artifacts.commit(&cfg.out)? {
        println!("wrote {}", path.display());
    }
    if outcome == Outcome::Partial {
        eprintln!("warning: some speedlines failed; see the report for details");
    }
    Ok(outcome)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
