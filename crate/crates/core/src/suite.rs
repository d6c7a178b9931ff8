//! Named algorithm configurations and repeated, seeded comparison runs.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::baseline::{ridge_fit_dataset, ridge_rmse};
use crate::data::{apply_preprocessor, fit_preprocessor, split, Dataset, MAX_INPUT_DIMS, TRAIN_RATIO};
use crate::error::{Error, Result};
use crate::model::DropVariant;
use crate::optim::LrScheme;
use crate::trainer::{train, TrainConfig, TrainHistory};

/// Regularization coefficient shared by the ridge baseline and the regularized variants.
pub const DEFAULT_LAMBDA: f64 = 0.05;

/// The algorithms the experiment runner knows by name.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AlgorithmKind {
    Rr,
    Mbgd,
    MbgdR,
    MbgdD,
    MbgdRd,
    MbgdA,
    MbgdRda,
    MbgdRdaMf,
    MbgdRdaMembership,
    MbgdRdAdam,
}

impl AlgorithmKind {
    pub const ALL: [AlgorithmKind; 10] = [
        Self::Rr,
        Self::Mbgd,
        Self::MbgdR,
        Self::MbgdD,
        Self::MbgdRd,
        Self::MbgdA,
        Self::MbgdRda,
        Self::MbgdRdaMf,
        Self::MbgdRdaMembership,
        Self::MbgdRdAdam,
    ];

    /// The seven-algorithm comparison.
    pub const DEFAULT_SUITE: [AlgorithmKind; 7] = [
        Self::Rr,
        Self::Mbgd,
        Self::MbgdR,
        Self::MbgdD,
        Self::MbgdRd,
        Self::MbgdA,
        Self::MbgdRda,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Rr => "RR",
            Self::Mbgd => "MBGD",
            Self::MbgdR => "MBGD-R",
            Self::MbgdD => "MBGD-D",
            Self::MbgdRd => "MBGD-RD",
            Self::MbgdA => "MBGD-A",
            Self::MbgdRda => "MBGD-RDA",
            Self::MbgdRdaMf => "MBGD-RDA-MF",
            Self::MbgdRdaMembership => "MBGD-RDA-Membership",
            Self::MbgdRdAdam => "MBGD-RD-Adam",
        }
    }

    /// Whether the algorithm uses the l2 penalty.
    pub fn regularized(self) -> bool {
        !matches!(self, Self::Mbgd | Self::MbgdD | Self::MbgdA)
    }

    /// Whether the algorithm uses a drop regularizer.
    pub fn drops(self) -> bool {
        !matches!(self, Self::Rr | Self::Mbgd | Self::MbgdR | Self::MbgdA)
    }

    /// Preset configuration; `None` for the single-pass ridge baseline.
    pub fn train_config(self) -> Option<TrainConfig> {
        let base = TrainConfig {
            lambda: 0.0,
            drop_variant: DropVariant::None,
            lr_scheme: LrScheme::FixedJang,
            ..TrainConfig::default()
        };
        let with = |lambda: f64, drop: DropVariant, lr: LrScheme| TrainConfig {
            lambda,
            drop_variant: drop,
            lr_scheme: lr,
            ..base.clone()
        };
        let l = DEFAULT_LAMBDA;
        Some(match self {
            Self::Rr => return None,
            Self::Mbgd => base.clone(),
            Self::MbgdR => with(l, DropVariant::None, LrScheme::FixedJang),
            Self::MbgdD => with(0.0, DropVariant::Rule, LrScheme::FixedJang),
            Self::MbgdRd => with(l, DropVariant::Rule, LrScheme::FixedJang),
            Self::MbgdA => with(0.0, DropVariant::None, LrScheme::AdaBound),
            Self::MbgdRda => with(l, DropVariant::Rule, LrScheme::AdaBound),
            Self::MbgdRdaMf => with(l, DropVariant::Mf, LrScheme::AdaBound),
            Self::MbgdRdaMembership => with(l, DropVariant::Membership, LrScheme::AdaBound),
            Self::MbgdRdAdam => with(l, DropVariant::Rule, LrScheme::Adam),
        })
    }
}

impl fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AlgorithmKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown algorithm '{s}'")))
    }
}

/// How an entry of a suite is trained.
#[derive(Clone, Debug, PartialEq)]
pub enum Algorithm {
    Ridge { lambda: f64 },
    Iterative(TrainConfig),
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedAlgorithm {
    pub name: String,
    pub algorithm: Algorithm,
}

impl NamedAlgorithm {
    pub fn preset(kind: AlgorithmKind) -> Self {
        let algorithm = match kind.train_config() {
            Some(cfg) => Algorithm::Iterative(cfg),
            None => Algorithm::Ridge {
                lambda: DEFAULT_LAMBDA,
            },
        };
        Self {
            name: kind.name().to_owned(),
            algorithm,
        }
    }

    pub fn iterative(name: impl Into<String>, cfg: TrainConfig) -> Self {
        Self {
            name: name.into(),
            algorithm: Algorithm::Iterative(cfg),
        }
    }
}

/// Repeat-averaged outcome of one algorithm.
#[derive(Clone, Debug, PartialEq)]
pub enum SuiteOutcome {
    /// Mean of the per-iteration curves over repeats.
    Iterative(TrainHistory),
    SinglePass {
        mean_test_rmse: f64,
        mean_train_rmse: f64,
        seconds: f64,
    },
}

impl SuiteOutcome {
    /// Best mean test RMSE and its 1-based iteration (0 for a single pass).
    pub fn best_test(&self) -> Option<(f64, usize)> {
        match self {
            Self::Iterative(h) => h.best_test(),
            Self::SinglePass { mean_test_rmse, .. } => Some((*mean_test_rmse, 0)),
        }
    }

    pub fn final_test(&self) -> Option<f64> {
        match self {
            Self::Iterative(h) => h.test_rmse.last().copied(),
            Self::SinglePass { mean_test_rmse, .. } => Some(*mean_test_rmse),
        }
    }

    pub fn seconds(&self) -> f64 {
        match self {
            Self::Iterative(h) => h.seconds,
            Self::SinglePass { seconds, .. } => *seconds,
        }
    }

    pub fn history(&self) -> Option<&TrainHistory> {
        match self {
            Self::Iterative(h) => Some(h),
            Self::SinglePass { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteResult {
    pub name: String,
    pub outcome: SuiteOutcome,
}

/// SplitMix64 finalizer, used to derive independent seeds from a master seed.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One repeat's train/test split, preprocessed with statistics of its training part.
#[derive(Clone, Debug)]
pub struct PreparedSplit {
    pub train: Dataset,
    pub test: Dataset,
    /// Seed handed to every iterative algorithm of this repeat.
    pub run_seed: u64,
}

pub fn prepare_split(data: &Dataset, seed: u64, repeat: usize) -> Result<PreparedSplit> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 2 * repeat as u64));
    let (train, test) = split(data, TRAIN_RATIO, &mut rng)?;
    let pre = fit_preprocessor(&train, MAX_INPUT_DIMS)?;
    Ok(PreparedSplit {
        train: apply_preprocessor(&pre, &train)?,
        test: apply_preprocessor(&pre, &test)?,
        run_seed: mix_seed(seed, 2 * repeat as u64 + 1),
    })
}

enum RunOutcome {
    Iterative(TrainHistory),
    SinglePass { test: f64, train: f64, seconds: f64 },
}

fn run_one(algo: &Algorithm, split: &PreparedSplit) -> Result<RunOutcome> {
    match algo {
        Algorithm::Ridge { lambda } => {
            let start = Instant::now();
            let model = ridge_fit_dataset(&split.train, *lambda)?;
            Ok(RunOutcome::SinglePass {
                test: ridge_rmse(&model, &split.test)?,
                train: ridge_rmse(&model, &split.train)?,
                seconds: start.elapsed().as_secs_f64(),
            })
        }
        Algorithm::Iterative(cfg) => {
            let cfg = TrainConfig {
                seed: split.run_seed,
                ..cfg.clone()
            };
            let (_, hist) = train(&cfg, &split.train, &split.test)?;
            Ok(RunOutcome::Iterative(hist))
        }
    }
}

/// Runs every algorithm on `repeats` independent splits of `data` and averages
/// the results per algorithm.
///
/// Within a repeat all algorithms see the same split and the same run seed, so
/// they draw identical mini-batches. Runs execute in parallel; the averaging is
/// done afterwards in a fixed order, so the output only depends on the inputs.
pub fn run_suite(algorithms: &[NamedAlgorithm], data: &Dataset, repeats: usize, seed: u64) -> Result<Vec<SuiteResult>> {
    if repeats == 0 {
        return Err(Error::Config("repeats must be at least 1".into()));
    }
    let splits = (0..repeats)
        .into_par_iter()
        .map(|r| prepare_split(data, seed, r))
        .collect::<Result<Vec<_>>>()?;

    let jobs: Vec<(usize, usize)> = (0..algorithms.len())
        .flat_map(|a| (0..repeats).map(move |r| (a, r)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(a, r)| run_one(&algorithms[a].algorithm, &splits[r]))
        .collect::<Result<Vec<_>>>()?;

    let mut out = Vec::with_capacity(algorithms.len());
    for (a, chunk) in runs.chunks(repeats).enumerate() {
        let outcome = match &algorithms[a].algorithm {
            Algorithm::Iterative(_) => {
                let hists: Vec<TrainHistory> = chunk
                    .iter()
                    .map(|r| match r {
                        RunOutcome::Iterative(h) => h.clone(),
                        RunOutcome::SinglePass { .. } => unreachable!("iterative algorithm"),
                    })
                    .collect();
                SuiteOutcome::Iterative(TrainHistory::mean(&hists).expect("repeats >= 1"))
            }
            Algorithm::Ridge { .. } => {
                let n = chunk.len() as f64;
                let (mut test, mut train, mut secs) = (0.0, 0.0, 0.0);
                for r in chunk {
                    if let RunOutcome::SinglePass { test: te, train: tr, seconds } = r {
                        test += te;
                        train += tr;
                        secs += seconds;
                    }
                }
                SuiteOutcome::SinglePass {
                    mean_test_rmse: test / n,
                    mean_train_rmse: train / n,
                    seconds: secs / n,
                }
            }
        };
        out.push(SuiteResult {
            name: algorithms[a].name.clone(),
            outcome,
        });
    }
    Ok(out)
}
