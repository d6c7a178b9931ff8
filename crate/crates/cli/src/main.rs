//! `tsk`: runs TSK fuzzy regression experiments from the command line.

mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::Parser;

use tsk_core::data::{synthetic_sine, write_csv};
use tsk_core::experiment::{emit_gradient_check_report, run_experiment, SYNTHETIC_ROWS, SYNTHETIC_SEED};
use tsk_core::suite::SuiteOutcome;

use crate::config::{FileConfig, Settings};

/// Train and compare TSK fuzzy regression algorithms over repeated random splits.
///
/// Writes `history_<algo>.csv`, `summary.csv` and `improvement_<algo>.csv` to the
/// output directory.
#[derive(Parser, Debug, Default)]
#[command(name = "tsk", version, about)]
pub struct Cli {
    /// TOML file with any of the keys below plus a `[set]` table of overrides.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Dataset CSV with a header row, or `synthetic` for the built-in dataset.
    #[arg(long, value_name = "PATH")]
    data: Option<String>,

    /// Target column, by name or zero-based index.
    #[arg(long, value_name = "NAME|INDEX")]
    target: Option<String>,

    /// Comma-separated algorithm names, e.g. `RR,MBGD,MBGD-RDA`.
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    algos: Option<Vec<String>>,

    /// Random 70/30 splits each algorithm runs on [default: 10].
    #[arg(long)]
    repeats: Option<usize>,

    /// Master seed for splits, batches and drop masks [default: 0].
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory [default: results].
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Hyperparameter override, e.g. `--set iters=300`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Check analytic gradients against finite differences instead of training.
    #[arg(long)]
    grad_check: bool,

    /// Inputs of the gradient-check models.
    #[arg(long, default_value_t = 2, requires = "grad_check")]
    inputs: usize,

    /// MFs per input of the gradient-check models.
    #[arg(long, default_value_t = 2, requires = "grad_check")]
    mfs: usize,

    /// Number of gradient-check models.
    #[arg(long, default_value_t = 100, requires = "grad_check")]
    trials: usize,

    /// Write the built-in synthetic dataset to this CSV file and exit.
    #[arg(long, value_name = "PATH")]
    gen_synthetic: Option<PathBuf>,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(path) = &cli.gen_synthetic {
        write_csv(&synthetic_sine(SYNTHETIC_ROWS, SYNTHETIC_SEED), path)
            .with_context(|| format!("write stage failed: {}", path.display()))?;
        println!("wrote {} rows to {}", SYNTHETIC_ROWS, path.display());
        return Ok(());
    }

    let file = match &cli.config {
        Some(path) => FileConfig::read(path).context("configure stage failed")?,
        None => FileConfig::default(),
    };
    let settings = Settings::merge(file, &cli).context("configure stage failed")?;

    if cli.grad_check {
        let path = settings.out.join("grad_check.txt");
        let report = emit_gradient_check_report(cli.inputs, cli.mfs, cli.trials, settings.seed, &path)
            .context("gradient check failed")?;
        if report.trials() == 0 {
            println!("no trials run; wrote empty report to {}", path.display());
        } else {
            println!(
                "{} trials, inputs={}, mfs={}: max relative error {:.3e}, median {:.3e} ({})",
                report.trials(),
                cli.inputs,
                cli.mfs,
                report.max_rel_error(),
                report.median_rel_error(),
                path.display()
            );
        }
        return Ok(());
    }

    let spec = settings.into_spec()?;
    let report = run_experiment(&spec)?;
    println!("{:<22} {:>14} {:>9} {:>10}", "algorithm", "best test RMSE", "best iter", "seconds");
    for r in &report.results {
        let (best, iter) = r.outcome.best_test().unwrap_or((f64::NAN, 0));
        let iter = match r.outcome {
            SuiteOutcome::SinglePass { .. } => "-".to_owned(),
            SuiteOutcome::Iterative(_) => iter.to_string(),
        };
        println!("{:<22} {:>14.6} {:>9} {:>10.3}", r.name, best, iter, r.outcome.seconds());
    }
    println!("wrote {} files to {}", report.files.len(), spec.out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// Splits `key=value`.
fn parse_assignment(s: &str) -> anyhow::Result<(String, String)> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_owned(), v.trim().to_owned())),
        _ => bail!("expected KEY=VALUE, got '{s}'"),
    }
}
