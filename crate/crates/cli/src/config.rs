//! Experiment settings: built-in defaults, then the config file, then flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Deserialize;

use tsk_core::experiment::{DataSource, ExperimentSpec, DEFAULT_REPEATS, SYNTHETIC_ROWS, SYNTHETIC_SEED};
use tsk_core::AlgorithmKind;

use crate::{parse_assignment, Cli};

/// `--data` value selecting the built-in dataset.
pub const SYNTHETIC: &str = "synthetic";

pub const DEFAULT_OUT: &str = "results";

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ListOrString {
    List(Vec<String>),
    Joined(String),
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum NameOrIndex {
    Name(String),
    Index(u64),
}

/// Contents of a `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    data: Option<String>,
    target: Option<NameOrIndex>,
    algos: Option<ListOrString>,
    repeats: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    /// Hyperparameter overrides, same keys as `--set`.
    #[serde(default)]
    set: toml::Table,
}

impl FileConfig {
    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }
}

#[derive(Debug, PartialEq)]
pub struct Settings {
    pub data: Option<String>,
    pub target: Option<String>,
    pub algos: Vec<AlgorithmKind>,
    pub repeats: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub overrides: Vec<(String, String)>,
}

fn parse_algos<S: AsRef<str>>(names: &[S]) -> anyhow::Result<Vec<AlgorithmKind>> {
    names
        .iter()
        .map(AsRef::as_ref)
        .filter(|s| !s.trim().is_empty())
        .map(|s| Ok(s.parse::<AlgorithmKind>()?))
        .collect()
}

fn toml_scalar(key: &str, v: &toml::Value) -> anyhow::Result<String> {
    Ok(match v {
        toml::Value::String(s) => s.clone(),
        toml::Value::Integer(i) => i.to_string(),
        toml::Value::Float(f) => f.to_string(),
        toml::Value::Boolean(b) => b.to_string(),
        _ => bail!("override '{key}' must be a scalar"),
    })
}

impl Settings {
    /// Layers the config file and then the command-line flags over the defaults.
    /// Overrides from the file come first, so a `--set` of the same key wins.
    pub fn merge(file: FileConfig, cli: &Cli) -> anyhow::Result<Self> {
        let mut s = Settings {
            data: None,
            target: None,
            algos: AlgorithmKind::DEFAULT_SUITE.to_vec(),
            repeats: DEFAULT_REPEATS,
            seed: 0,
            out: PathBuf::from(DEFAULT_OUT),
            overrides: Vec::new(),
        };

        s.data = file.data;
        s.target = file.target.map(|t| match t {
            NameOrIndex::Name(n) => n,
            NameOrIndex::Index(i) => i.to_string(),
        });
        if let Some(a) = file.algos {
            s.algos = match a {
                ListOrString::List(v) => parse_algos(&v)?,
                ListOrString::Joined(j) => parse_algos(&j.split(',').collect::<Vec<_>>())?,
            };
        }
        s.repeats = file.repeats.unwrap_or(s.repeats);
        s.seed = file.seed.unwrap_or(s.seed);
        s.out = file.out.unwrap_or(s.out);
        for (k, v) in &file.set {
            s.overrides.push((k.clone(), toml_scalar(k, v)?));
        }

        if let Some(d) = &cli.data {
            s.data = Some(d.clone());
        }
        if let Some(t) = &cli.target {
            s.target = Some(t.clone());
        }
        if let Some(a) = &cli.algos {
            s.algos = parse_algos(a)?;
        }
        s.repeats = cli.repeats.unwrap_or(s.repeats);
        s.seed = cli.seed.unwrap_or(s.seed);
        if let Some(o) = &cli.out {
            s.out = o.clone();
        }
        for a in &cli.set {
            s.overrides.push(parse_assignment(a)?);
        }
        Ok(s)
    }

    pub fn into_spec(self) -> anyhow::Result<ExperimentSpec> {
        let data = match self.data.as_deref() {
            None => bail!("configure stage failed: no dataset given (use --data <path> or --data {SYNTHETIC})"),
            Some(d) if d.eq_ignore_ascii_case(SYNTHETIC) => DataSource::Synthetic {
                rows: SYNTHETIC_ROWS,
                seed: SYNTHETIC_SEED,
            },
            Some(path) => match self.target {
                Some(target) => DataSource::Csv {
                    path: PathBuf::from(path),
                    target,
                },
                None => bail!("configure stage failed: --target is required for a CSV dataset"),
            },
        };
        let mut spec = ExperimentSpec::new(data, self.out);
        spec.algorithms = self.algos;
        spec.repeats = self.repeats;
        spec.seed = self.seed;
        spec.overrides = self.overrides;
        Ok(spec)
    }
}
