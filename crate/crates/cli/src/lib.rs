//! `loadcast` command line: `gen-data`, `train`, `eval` and `compare`.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use loadcast::models::ModelKind;

use crate::config::{ExperimentConfig, Overrides};

#[derive(Debug, Parser)]
#[command(name = "loadcast", version, about = "Hourly load forecasting benchmark on a synthetic 44-bus feeder")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the feeder and its hourly P/Q dataset(s)
    GenData(GenDataArgs),
    /// Train one model kind on the generated data
    Train(TrainArgs),
    /// Score a trained model on the test split and export a bus trace
    Eval(EvalArgs),
    /// Generate, train and evaluate every (model, dataset) cell and write the report
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment config JSON, or any artifact with an embedded config
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed for the network, the load noise, initialization and shuffling
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_years(s: &str) -> std::result::Result<usize, String> {
    match s {
        "1" => Ok(1),
        "5" => Ok(5),
        _ => Err(format!("unsupported dataset length '{s}'; expected 1 or 5")),
    }
}

fn parse_model(s: &str) -> std::result::Result<ModelKind, String> {
    s.parse().map_err(|e: loadcast::Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_parser = parse_years, value_delimiter = ',')]
    pub years: Option<Vec<usize>>,
}

/// `--model` and `--years` pick what to train without changing the recorded
/// config, so a rerun from an artifact reproduces it.
#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_parser = parse_model)]
    pub model: Option<ModelKind>,
    #[arg(long, value_parser = parse_years, value_delimiter = ',')]
    pub years: Option<Vec<usize>>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_parser = parse_model)]
    pub model: Option<ModelKind>,
    #[arg(long, value_parser = parse_years, value_delimiter = ',')]
    pub years: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: Common,
    /// Restrict to these model kinds (comma separated)
    #[arg(long, value_parser = parse_model, value_delimiter = ',')]
    pub model: Option<Vec<ModelKind>>,
    #[arg(long, value_parser = parse_years, value_delimiter = ',')]
    pub years: Option<Vec<usize>>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Print the execution plan and exit
    #[arg(long)]
    pub dry_run: bool,
    /// Cells to run concurrently
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

fn resolve(common: &Common, mut overrides: Overrides) -> Result<ExperimentConfig> {
    overrides.seed = common.seed;
    overrides.out = common.out.clone();
    ExperimentConfig::resolve(common.config.as_deref(), &overrides)
}

fn single_kind(cfg: &ExperimentConfig, model: Option<ModelKind>, cmd: &str) -> Result<ModelKind> {
    match (model, cfg.model.kinds.as_slice()) {
        (Some(k), _) => Ok(k),
        (None, [k]) => Ok(*k),
        (None, _) => bail!("{cmd} handles one model kind; pass --model (fnn, rnn, lstm, gru or a3tgcn)"),
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::GenData(a) => {
            let cfg = resolve(&a.common, Overrides { years: a.years, ..Default::default() })?;
            commands::gen_data(&cfg)?;
        }
        Command::Train(a) => {
            let cfg = resolve(&a.common, Overrides { epochs: a.epochs, ..Default::default() })?;
            let kind = single_kind(&cfg, a.model, "train")?;
            for years in a.years.unwrap_or_else(|| cfg.dataset.years.clone()) {
                commands::train_cell(&cfg, kind, years)?;
            }
        }
        Command::Eval(a) => {
            let cfg = resolve(&a.common, Overrides::default())?;
            let kind = single_kind(&cfg, a.model, "eval")?;
            for years in a.years.unwrap_or_else(|| cfg.dataset.years.clone()) {
                commands::eval_cell(&cfg, kind, years)?;
            }
        }
        Command::Compare(a) => {
            let cfg = resolve(
                &a.common,
                Overrides {
                    years: a.years,
                    epochs: a.epochs,
                    models: a.model,
                    ..Default::default()
                },
            )?;
            if a.dry_run {
                println!("plan for '{}' ({} cells):", cfg.run.name, cfg.dataset.years.len() * cfg.model.kinds.len());
                for step in commands::plan(&cfg) {
                    println!("  {step}");
                }
                return Ok(0);
            }
            let outcome = commands::compare_cells(&cfg, a.jobs.max(1))?;
            if !outcome.failures.is_empty() {
                for f in &outcome.failures {
                    eprintln!("cell failed: {f}");
                }
                return Ok(1);
            }
        }
    }
    Ok(0)
}
