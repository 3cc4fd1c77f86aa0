//! Batch front end: fit score-driven slot models, roll daily VaR forecasts,
//! and run the backtesting battery, all from a declarative config file.

mod commands;
mod config;
mod data;

use anyhow::Result;
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "gdvar",
    version,
    about = "Score-driven generalized-distribution VaR forecasting and backtesting"
)]
struct Cli {
    /// Config file (key = value TOML); flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Random seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Distribution family: wpd, gpd, rpd, or pareto4.
    #[arg(long, global = true)]
    family: Option<String>,

    /// Comma-separated confidence levels, e.g. 0.90,0.95,0.99.
    #[arg(long, global = true)]
    levels: Option<String>,

    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit per-slot models on the estimation window and write the archive.
    Fit,
    /// Rolling daily VaR forecasts (refitting, or frozen via --models).
    Forecast {
        /// Existing model archive; skips re-estimation when given.
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Backtest forecast files against realized losses.
    Backtest {
        /// Forecast CSV (repeatable, one per model).
        #[arg(long = "forecast", required = true)]
        forecasts: Vec<PathBuf>,
        /// Realized daily losses (CSV with date,loss).
        #[arg(long)]
        returns: PathBuf,
        /// Per-model score CSV as NAME=PATH (repeatable), for the LM test.
        #[arg(long = "scores")]
        scores: Vec<String>,
    },
    /// Run the built-in invariant checks.
    Selftest,
}

fn run(cli: Cli) -> Result<i32> {
    let mut cfg = config::RunConfig::load(cli.config.as_deref())?;
    commands::apply_overrides(&mut cfg, cli.seed, cli.family, cli.levels, cli.out)?;
    match cli.command {
        Command::Fit => commands::cmd_fit(&cfg),
        Command::Forecast { models } => commands::cmd_forecast(&cfg, models.as_deref()),
        Command::Backtest { forecasts, returns, scores } => {
            let scores = commands::parse_scores(&scores)?;
            commands::cmd_backtest(&cfg, &forecasts, &returns, &scores)
        }
        Command::Selftest => commands::cmd_selftest(),
    }
}

fn main() -> ExitCode {
    gdvar::exec::init_workers_from_env();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            // Machine-readable error record on stderr.
            let record = serde_json::json!({ "error": format!("{err:#}") });
            eprintln!("{record}");
            ExitCode::from(1)
        }
    }
}
