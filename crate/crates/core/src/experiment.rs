//! Batch experiments: load a dataset, run a list of named algorithms over
//! repeated splits, and write curves and a summary table as CSV.
//!
//! Output files in the output directory:
//!
//! * `history_<algo>.csv`: `iter,train_rmse,test_rmse,loss,mean_lr` (iterative algorithms only)
//! * `summary.csv`: `algo,best_test_rmse,best_iter,mean_final_test_rmse,seconds`
//! * `improvement_<algo>.csv`: `iter,percent`, relative to `MBGD` when it is part of the run

use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::info;

use crate::data::{load_csv, synthetic_sine, Dataset};
use crate::error::{Error, Result};
use crate::grad::gradient_check;
use crate::suite::{run_suite, Algorithm, AlgorithmKind, NamedAlgorithm, SuiteResult};
use crate::trainer::{fmt_sig, percent_improvement, TrainConfig};

pub const DEFAULT_REPEATS: usize = 10;

/// Rows in the built-in synthetic dataset.
pub const SYNTHETIC_ROWS: usize = 1500;

/// Generator seed of the built-in synthetic dataset.
pub const SYNTHETIC_SEED: u64 = 2024;

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Csv { path: PathBuf, target: String },
    /// `y = sin(x1) * x2 + 0.1 * noise` with three nuisance inputs.
    Synthetic { rows: usize, seed: u64 },
}

impl DataSource {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DataSource::Csv { path, target } => load_csv(path, target),
            DataSource::Synthetic { rows, seed } => Ok(synthetic_sine(*rows, *seed)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub data: DataSource,
    pub algorithms: Vec<AlgorithmKind>,
    pub repeats: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// `key=value` hyperparameter overrides, applied in order.
    pub overrides: Vec<(String, String)>,
}

impl ExperimentSpec {
    pub fn new(data: DataSource, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            data,
            algorithms: AlgorithmKind::DEFAULT_SUITE.to_vec(),
            repeats: DEFAULT_REPEATS,
            seed: 0,
            out_dir: out_dir.into(),
            overrides: Vec::new(),
        }
    }
}

/// The part of an experiment that failed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Configure,
    Load,
    Preprocess,
    Train,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Configure => "configure",
            Stage::Load => "load",
            Stage::Preprocess => "preprocess",
            Stage::Train => "train",
            Stage::Write => "write",
        })
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} stage failed: {source}")]
pub struct ExperimentError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

fn at(stage: Stage) -> impl FnOnce(Error) -> ExperimentError {
    move |source| ExperimentError { stage, source }
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub results: Vec<SuiteResult>,
    pub files: Vec<PathBuf>,
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for '{key}'")))
}

/// Applies one override to the configuration of `kind`.
///
/// `lambda` and `p` only touch algorithms that use the penalty or a drop
/// regularizer, so an override never turns one named algorithm into another.
/// Every other key applies to all iterative algorithms; `lambda` also sets the
/// ridge coefficient.
pub fn apply_override(kind: AlgorithmKind, algo: &mut Algorithm, key: &str, value: &str) -> Result<()> {
    let key = key.trim().to_ascii_lowercase();
    let cfg = match algo {
        Algorithm::Ridge { lambda } => {
            match key.as_str() {
                "lambda" => *lambda = parse(&key, value)?,
                _ => check_key(&key)?,
            }
            return Ok(());
        }
        Algorithm::Iterative(cfg) => cfg,
    };
    match key.as_str() {
        "mfs" | "mm" => cfg.mfs = parse(&key, value)?,
        "iters" | "k" => cfg.iters = parse(&key, value)?,
        "batch_size" | "nbs" => cfg.batch_size = parse(&key, value)?,
        "p" | "keep_prob" => {
            if kind.drops() {
                cfg.keep_prob = parse(&key, value)?;
            }
        }
        "alpha" => cfg.alpha = parse(&key, value)?,
        "lambda" => {
            if kind.regularized() {
                cfg.lambda = parse(&key, value)?;
            }
        }
        "beta1" => cfg.beta1 = parse(&key, value)?,
        "beta2" => cfg.beta2 = parse(&key, value)?,
        "epsilon" => cfg.epsilon = parse(&key, value)?,
        "alpha_final" => cfg.alpha_final = parse(&key, value)?,
        "drop_variant" => cfg.drop_variant = value.parse()?,
        "lr_scheme" => cfg.lr_scheme = value.parse()?,
        other => check_key(other)?,
    }
    Ok(())
}

pub const OVERRIDE_KEYS: [&str; 12] = [
    "mfs",
    "iters",
    "batch_size",
    "p",
    "alpha",
    "lambda",
    "beta1",
    "beta2",
    "epsilon",
    "alpha_final",
    "drop_variant",
    "lr_scheme",
];

fn check_key(key: &str) -> Result<()> {
    let aliases = ["mm", "k", "nbs", "keep_prob"];
    if OVERRIDE_KEYS.contains(&key) || aliases.contains(&key) {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "unknown hyperparameter '{key}' (known: {})",
            OVERRIDE_KEYS.join(", ")
        )))
    }
}

/// Resolves the named algorithms with the overrides applied.
pub fn resolve_algorithms(spec: &ExperimentSpec) -> Result<Vec<NamedAlgorithm>> {
    if spec.algorithms.is_empty() {
        return Err(Error::Config("no algorithms selected".into()));
    }
    spec.algorithms
        .iter()
        .map(|&kind| {
            let mut named = NamedAlgorithm::preset(kind);
            for (k, v) in &spec.overrides {
                apply_override(kind, &mut named.algorithm, k, v)?;
            }
            if let Algorithm::Iterative(cfg) = &named.algorithm {
                cfg.validate()?;
            }
            Ok(named)
        })
        .collect()
}

/// Runs the experiment and writes its CSV outputs.
pub fn run_experiment(spec: &ExperimentSpec) -> std::result::Result<ExperimentReport, ExperimentError> {
    let algorithms = resolve_algorithms(spec).map_err(at(Stage::Configure))?;
    if spec.repeats == 0 {
        return Err(at(Stage::Configure)(Error::Config("repeats must be at least 1".into())));
    }
    let data = spec.data.load().map_err(at(Stage::Load))?;
    info!(
        "loaded {} rows with {} features; running {} algorithms x {} repeats",
        data.len(),
        data.num_features(),
        algorithms.len(),
        spec.repeats
    );
    // Fail on preprocessing problems before any training starts.
    crate::suite::prepare_split(&data, spec.seed, 0).map_err(at(Stage::Preprocess))?;
    let results = run_suite(&algorithms, &data, spec.repeats, spec.seed).map_err(at(Stage::Train))?;
    let files = write_outputs(&spec.out_dir, &results).map_err(at(Stage::Write))?;
    Ok(ExperimentReport { results, files })
}

/// File-name-safe version of an algorithm name.
fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

pub fn summary_csv(results: &[SuiteResult]) -> String {
    let mut out = String::from("algo,best_test_rmse,best_iter,mean_final_test_rmse,seconds\n");
    for r in results {
        let (best, iter) = r.outcome.best_test().unwrap_or((f64::NAN, 0));
        let last = r.outcome.final_test().unwrap_or(f64::NAN);
        writeln!(
            out,
            "{},{},{},{},{:.3}",
            r.name,
            fmt_sig(best),
            iter,
            fmt_sig(last),
            r.outcome.seconds()
        )
        .expect("writing to a String cannot fail");
    }
    out
}

pub fn improvement_csv(percent: &[f64]) -> String {
    let mut out = String::from("iter,percent\n");
    for (i, p) in percent.iter().enumerate() {
        writeln!(out, "{},{}", i + 1, fmt_sig(*p)).expect("writing to a String cannot fail");
    }
    out
}

pub fn write_outputs(dir: &Path, results: &[SuiteResult]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut write = |name: String, body: String| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, body)?;
        files.push(path);
        Ok(())
    };

    for r in results {
        if let Some(h) = r.outcome.history() {
            write(format!("history_{}.csv", file_stem(&r.name)), h.to_csv())?;
        }
    }
    write("summary.csv".into(), summary_csv(results))?;

    let baseline = results
        .iter()
        .find(|r| r.name == AlgorithmKind::Mbgd.name())
        .and_then(|r| r.outcome.history());
    if let Some(base) = baseline {
        for r in results {
            if r.name == AlgorithmKind::Mbgd.name() {
                continue;
            }
            if let Some(h) = r.outcome.history() {
                let p = percent_improvement(&base.test_rmse, &h.test_rmse)?;
                write(format!("improvement_{}.csv", file_stem(&r.name)), improvement_csv(&p))?;
            }
        }
    }
    Ok(files)
}

/// Writes the gradient-check summary for `trials` random `(inputs, mfs)` models to `path`.
pub fn emit_gradient_check_report(
    inputs: usize,
    mfs: usize,
    trials: usize,
    seed: u64,
    path: &Path,
) -> Result<crate::grad::GradCheckReport> {
    let report = gradient_check(inputs, mfs, trials, seed)?;
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, report.to_text())?;
    Ok(report)
}

/// Default configuration of `kind` after overrides; `None` for the ridge baseline.
pub fn effective_config(kind: AlgorithmKind, overrides: &[(String, String)]) -> Result<Option<TrainConfig>> {
    let mut named = NamedAlgorithm::preset(kind);
    for (k, v) in overrides {
        apply_override(kind, &mut named.algorithm, k, v)?;
    }
    Ok(match named.algorithm {
        Algorithm::Iterative(cfg) => Some(cfg),
        Algorithm::Ridge { .. } => None,
    })
}
