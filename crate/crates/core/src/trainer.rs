//! Mini-batch training of a TSK model: batch sampling, per-example drop masks,
//! masked gradients with l2 regularization, the configured update rule, and
//! per-iteration metrics.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{sample_batch, Dataset};
use crate::dropout::sample_mask;
use crate::error::{Error, Result};
use crate::grad::loss_and_gradients;
use crate::model::{init_model, DropMask, DropVariant, TskModel, SIGMA_MIN};
use crate::optim::{adabound_step, sgd_step, AdaBoundHyper, JangLrState, LrScheme, MomentState, StepStats};

/// Hyperparameters of one training run. The defaults are the full
/// regularization + DropRule + AdaBound configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// MFs per input.
    pub mfs: usize,
    /// Number of iterations `K`.
    pub iters: usize,
    pub batch_size: usize,
    /// Keep probability `P` of the drop regularizer.
    pub keep_prob: f64,
    /// Initial learning rate.
    pub alpha: f64,
    pub lambda: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub alpha_final: f64,
    pub drop_variant: DropVariant,
    pub lr_scheme: LrScheme,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mfs: 2,
            iters: 500,
            batch_size: 64,
            keep_prob: 0.5,
            alpha: 0.01,
            lambda: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            alpha_final: 0.01,
            drop_variant: DropVariant::Rule,
            lr_scheme: LrScheme::AdaBound,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn hyper(&self) -> AdaBoundHyper {
        AdaBoundHyper {
            alpha: self.alpha,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            alpha_final: self.alpha_final,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_owned()));
        if self.mfs < 1 {
            return bad("mfs must be at least 1");
        }
        if self.batch_size < 1 {
            return bad("batch_size must be at least 1");
        }
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return bad("keep probability must lie in (0, 1]");
        }
        if !(self.alpha > 0.0) {
            return bad("alpha must be positive");
        }
        if !(self.lambda >= 0.0) {
            return bad("lambda must be non-negative");
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0) || !(self.alpha_final > 0.0) {
            return bad("epsilon and alpha_final must be positive");
        }
        Ok(())
    }
}

/// Per-iteration training curves.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub train_rmse: Vec<f64>,
    pub test_rmse: Vec<f64>,
    /// Masked mini-batch loss, penalty included, before the update.
    pub loss: Vec<f64>,
    /// Mean realized learning rate over all coordinates.
    pub mean_lr: Vec<f64>,
    pub min_lr: Vec<f64>,
    pub max_lr: Vec<f64>,
    /// Wall-clock duration of the run.
    pub seconds: f64,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.test_rmse.len()
    }

    pub fn is_empty(&self) -> bool {
        self.test_rmse.is_empty()
    }

    /// Smallest test RMSE and its 1-based iteration.
    pub fn best_test(&self) -> Option<(f64, usize)> {
        self.test_rmse
            .iter()
            .enumerate()
            .fold(None, |best: Option<(f64, usize)>, (i, &v)| match best {
                Some((b, _)) if b <= v => best,
                _ => Some((v, i + 1)),
            })
    }

    /// Point-wise mean of equally long histories. `None` for an empty slice.
    pub fn mean(runs: &[TrainHistory]) -> Option<TrainHistory> {
        let first = runs.first()?;
        let n = runs.len() as f64;
        let avg = |get: fn(&TrainHistory) -> &Vec<f64>| -> Vec<f64> {
            (0..get(first).len())
                .map(|i| runs.iter().map(|h| get(h)[i]).sum::<f64>() / n)
                .collect()
        };
        Some(TrainHistory {
            train_rmse: avg(|h| &h.train_rmse),
            test_rmse: avg(|h| &h.test_rmse),
            loss: avg(|h| &h.loss),
            mean_lr: avg(|h| &h.mean_lr),
            min_lr: avg(|h| &h.min_lr),
            max_lr: avg(|h| &h.max_lr),
            seconds: runs.iter().map(|h| h.seconds).sum::<f64>() / n,
        })
    }

    /// `iter,train_rmse,test_rmse,loss,mean_lr`, one row per iteration.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,train_rmse,test_rmse,loss,mean_lr\n");
        for i in 0..self.len() {
            writeln!(
                out,
                "{},{},{},{},{}",
                i + 1,
                fmt_sig(self.train_rmse[i]),
                fmt_sig(self.test_rmse[i]),
                fmt_sig(self.loss[i]),
                fmt_sig(self.mean_lr[i])
            )
            .expect("writing to a String cannot fail");
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Fixed-point decimal with 12 significant digits.
pub fn fmt_sig(v: f64) -> String {
    const DIGITS: i32 = 12;
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (DIGITS - 1 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}

/// Root mean squared error of `model` on `d`.
pub fn rmse(model: &TskModel, d: &Dataset) -> Result<f64> {
    if d.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let sse: f64 = d
        .rows()
        .zip(d.targets())
        .map(|(x, y)| {
            let e = y - model.predict(x);
            e * e
        })
        .sum();
    Ok((sse / d.len() as f64).sqrt())
}

/// `100 * (baseline - other) / baseline`, element-wise.
pub fn percent_improvement(baseline: &[f64], other: &[f64]) -> Result<Vec<f64>> {
    if baseline.len() != other.len() {
        return Err(Error::LengthMismatch {
            expected: baseline.len(),
            actual: other.len(),
        });
    }
    baseline
        .iter()
        .zip(other)
        .enumerate()
        .map(|(k, (&b, &o))| {
            if b == 0.0 {
                Err(Error::ZeroBaseline(k + 1))
            } else {
                Ok(100.0 * (b - o) / b)
            }
        })
        .collect()
}

/// Independent random streams of a run: batch selection and drop masks.
/// Keeping them apart means the drop variant never changes which batches are drawn.
fn run_rngs(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let batch = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = ChaCha8Rng::seed_from_u64(seed);
    mask.set_stream(1);
    (batch, mask)
}

/// Trains a freshly initialized model for `config.iters` iterations and returns
/// the final parameters (not the best ones seen) with the recorded curves.
pub fn train(config: &TrainConfig, train_set: &Dataset, test_set: &Dataset) -> Result<(TskModel, TrainHistory)> {
    if train_set.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    config.validate()?;
    let start = Instant::now();
    let mut model = init_model(&train_set.feature_stats(), config.mfs)?;
    let grid = model.grid().clone();
    let n_mfs = grid.inputs() * grid.mfs_per_input();
    let hyper = config.hyper();
    let (mut batch_rng, mut mask_rng) = run_rngs(config.seed);

    let mut theta = model.flatten();
    let mut moments = MomentState::new(theta.len());
    let mut jang = JangLrState::new(config.alpha);
    let mut history = TrainHistory::default();

    for _ in 0..config.iters {
        let idx = sample_batch(train_set.len(), config.batch_size, &mut batch_rng);
        let rows: Vec<&[f64]> = idx.iter().map(|&i| train_set.row(i)).collect();
        let targets: Vec<f64> = idx.iter().map(|&i| train_set.targets()[i]).collect();
        let masks: Vec<DropMask> = (0..rows.len())
            .map(|_| sample_mask(config.drop_variant, &grid, config.keep_prob, &mut mask_rng))
            .collect();

        let (batch_loss, grad) = loss_and_gradients(&model, &rows, &targets, config.lambda, &masks)?;

        let stats = match config.lr_scheme {
            LrScheme::FixedJang => {
                let alpha = jang.alpha();
                if let Some((index, &value)) = grad.iter().enumerate().find(|(_, v)| !v.is_finite()) {
                    return Err(Error::NonFiniteGradient { index, value });
                }
                sgd_step(&mut theta, &grad, alpha)?;
                jang.update(batch_loss);
                StepStats::uniform(alpha)
            }
            LrScheme::Adam => adabound_step(&mut moments, &mut theta, &grad, &hyper, 0.0, f64::INFINITY)?,
            LrScheme::AdaBound => {
                let (lower, upper) = hyper.bounds(moments.k + 1);
                adabound_step(&mut moments, &mut theta, &grad, &hyper, lower, upper)?
            }
        };

        for s in &mut theta[n_mfs..2 * n_mfs] {
            *s = s.max(SIGMA_MIN);
        }
        model.set_params(&theta)?;

        history.train_rmse.push(rmse(&model, train_set)?);
        history.test_rmse.push(rmse(&model, test_set)?);
        history.loss.push(batch_loss);
        history.mean_lr.push(stats.mean_rate);
        history.min_lr.push(stats.min_rate);
        history.max_lr.push(stats.max_rate);
    }
    history.seconds = start.elapsed().as_secs_f64();
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{apply_preprocessor, fit_preprocessor, split, synthetic_sine, MAX_INPUT_DIMS, TRAIN_RATIO};

    fn prepared(n: usize, seed: u64) -> (Dataset, Dataset) {
        let d = synthetic_sine(n, seed);
        let (train, test) = split(&d, TRAIN_RATIO, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let p = fit_preprocessor(&train, MAX_INPUT_DIMS).unwrap();
        (apply_preprocessor(&p, &train).unwrap(), apply_preprocessor(&p, &test).unwrap())
    }

    fn short(cfg: TrainConfig) -> TrainConfig {
        TrainConfig { iters: 60, ..cfg }
    }

    #[test]
    fn rmse_examples() {
        let model = TskModel::zeros(crate::model::RuleGrid::new(1, 2).unwrap());
        let d = Dataset::new(vec![vec![0.0], vec![1.0]], vec![3.0, -3.0], vec!["a".into()]).unwrap();
        assert_eq!(rmse(&model, &d).unwrap(), 3.0);
        let d = Dataset::new(
            vec![vec![0.0]; 4],
            vec![1.0, 2.0, 2.0, 1.0],
            vec!["a".into()],
        )
        .unwrap();
        assert!((rmse(&model, &d).unwrap() - 2.5f64.sqrt()).abs() < 1e-15);
        assert!((2.5f64.sqrt() - 1.5811).abs() < 1e-4);
    }

    #[test]
    fn improvement_examples() {
        assert_eq!(percent_improvement(&[2.0, 1.0], &[2.0, 1.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(percent_improvement(&[2.0], &[1.5]).unwrap(), vec![25.0]);
        assert!(percent_improvement(&[1.0], &[1.2]).unwrap()[0] < 0.0);
        assert!(matches!(
            percent_improvement(&[1.0, 0.0], &[1.0, 1.0]),
            Err(Error::ZeroBaseline(2))
        ));
    }

    #[test]
    fn zero_iterations_predict_zero() {
        let (tr, test) = prepared(300, 1);
        let cfg = TrainConfig { iters: 0, ..TrainConfig::default() };
        let (model, hist) = train(&cfg, &tr, &test).unwrap();
        assert!(hist.is_empty());
        let rms = (test.targets().iter().map(|y| y * y).sum::<f64>() / test.len() as f64).sqrt();
        assert_eq!(rmse(&model, &test).unwrap(), rms);
    }

    #[test]
    fn history_has_one_finite_entry_per_iteration() {
        let (train, test) = prepared(300, 2);
        let (_, hist) = train_run(&short(TrainConfig::default()), &train, &test);
        assert_eq!(hist.len(), 60);
        for series in [&hist.train_rmse, &hist.test_rmse, &hist.loss, &hist.mean_lr] {
            assert_eq!(series.len(), 60);
            assert!(series.iter().all(|v| v.is_finite()));
        }
    }

    fn train_run(cfg: &TrainConfig, tr: &Dataset, te: &Dataset) -> (TskModel, TrainHistory) {
        train(cfg, tr, te).unwrap()
    }

    fn curves(h: &TrainHistory) -> [&Vec<f64>; 6] {
        [&h.train_rmse, &h.test_rmse, &h.loss, &h.mean_lr, &h.min_lr, &h.max_lr]
    }

    #[test]
    fn all_keep_rule_drop_matches_no_drop() {
        let (train, test) = prepared(300, 3);
        let base = short(TrainConfig { lambda: 0.0, seed: 11, ..TrainConfig::default() });
        let kept = TrainConfig { drop_variant: DropVariant::Rule, keep_prob: 1.0, ..base.clone() };
        let none = TrainConfig { drop_variant: DropVariant::None, ..base };
        let (ma, a) = train_run(&kept, &train, &test);
        let (mb, b) = train_run(&none, &train, &test);
        assert_eq!(curves(&a), curves(&b));
        assert_eq!(ma, mb);
    }

    #[test]
    fn adam_is_unbounded_adabound() {
        let (train, test) = prepared(300, 4);
        let cfg = short(TrainConfig {
            lr_scheme: LrScheme::Adam,
            alpha_final: 1e-4,
            seed: 5,
            ..TrainConfig::default()
        });
        let (_, adam) = train_run(&cfg, &train, &test);
        let bounded = TrainConfig { lr_scheme: LrScheme::AdaBound, ..cfg };
        let (_, ab) = train_run(&bounded, &train, &test);
        assert_ne!(adam.test_rmse, ab.test_rmse);
        // Adam rates are not confined to the AdaBound interval
        let escapes = adam
            .max_lr
            .iter()
            .enumerate()
            .any(|(k, &hi)| hi > bounded.hyper().bounds(k as u64 + 1).1);
        assert!(escapes);
    }

    #[test]
    fn same_seed_same_history() {
        let (train, test) = prepared(300, 5);
        let cfg = short(TrainConfig { seed: 9, ..TrainConfig::default() });
        let (ma, a) = train_run(&cfg, &train, &test);
        let (mb, b) = train_run(&cfg, &train, &test);
        assert_eq!(curves(&a), curves(&b));
        assert_eq!(ma, mb);
        let other = TrainConfig { seed: 10, ..cfg };
        assert_ne!(train_run(&other, &train, &test).1.test_rmse, a.test_rmse);
    }

    #[test]
    fn descends_on_noiseless_linear_target() {
        let d = synthetic_sine(600, 6);
        let rows: Vec<Vec<f64>> = d.rows().map(<[f64]>::to_vec).collect();
        let y = rows.iter().map(|r| 0.8 * r[0] - 0.5 * r[1] + 0.3 * r[2]).collect();
        let d = Dataset::new(rows, y, d.feature_names().to_vec()).unwrap();
        let (tr, te) = split(&d, TRAIN_RATIO, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        let p = fit_preprocessor(&tr, MAX_INPUT_DIMS).unwrap();
        let (tr, te) = (apply_preprocessor(&p, &tr).unwrap(), apply_preprocessor(&p, &te).unwrap());
        let init = init_model(&tr.feature_stats(), 2).unwrap();
        let (_, hist) = train_run(&TrainConfig::default(), &tr, &te);
        assert!(hist.train_rmse.last().unwrap() < &rmse(&init, &tr).unwrap());
    }

    #[test]
    fn empty_training_set_rejected() {
        let (_, test) = prepared(100, 7);
        let empty = test.subset(&[]);
        assert!(matches!(
            train(&TrainConfig::default(), &empty, &test),
            Err(Error::EmptyTrainingSet)
        ));
    }

    #[test]
    fn csv_layout() {
        let h = TrainHistory {
            train_rmse: vec![1.0, 0.5],
            test_rmse: vec![1.25, 0.123456789012345],
            loss: vec![10.0, 4.0],
            mean_lr: vec![0.01, 0.011],
            min_lr: vec![0.01, 0.011],
            max_lr: vec![0.01, 0.011],
            seconds: 0.0,
        };
        let csv = h.to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "iter,train_rmse,test_rmse,loss,mean_lr");
        assert_eq!(lines[2], "2,0.500000000000,0.123456789012,4.00000000000,0.0110000000000");
        assert_eq!(h.best_test(), Some((0.123456789012345, 2)));
    }

    #[test]
    fn fmt_sig_keeps_twelve_digits() {
        assert_eq!(fmt_sig(1234.5), "1234.50000000");
        assert_eq!(fmt_sig(-0.000123), "-0.000123000000000");
        assert_eq!(fmt_sig(0.0), "0");
    }
}
