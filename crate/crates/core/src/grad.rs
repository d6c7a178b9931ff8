//! Regularized squared-error loss and its analytic gradient.
//!
//! The batch loss is
//!
//! ```text
//! L = 1/2 * sum_n (y_n - y(x_n))^2 + lambda/2 * sum_r sum_{m>=1} b[r][m]^2
//! ```
//!
//! Rule biases `b[r][0]` are not penalized. Gradients for the shared MF
//! parameters accumulate over every rule that uses the MF.

use std::ops::{Deref, DerefMut};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{DropMask, GaussianMf, RuleGrid, TskModel};

/// Largest grid the gradient checker accepts.
pub const GRAD_CHECK_MAX_RULES: usize = 1024;

/// Oracle magnitudes below this are compared absolutely rather than relatively.
pub const GRAD_CHECK_ABS_FLOOR: f64 = 1e-8;

/// Gradient aligned with [`TskModel::flatten`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradientVector(pub Vec<f64>);

impl GradientVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for GradientVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for GradientVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

fn check_batch(model: &TskModel, rows: &[&[f64]], targets: &[f64]) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if rows.len() != targets.len() {
        return Err(Error::LengthMismatch {
            expected: rows.len(),
            actual: targets.len(),
        });
    }
    if let Some(bad) = rows.iter().find(|r| r.len() != model.inputs()) {
        return Err(Error::DimensionMismatch {
            expected: model.inputs(),
            actual: bad.len(),
        });
    }
    Ok(())
}

/// `lambda/2 * sum of squared non-bias consequent coefficients`.
pub fn penalty(model: &TskModel, lambda: f64) -> f64 {
    let w = model.inputs() + 1;
    let sq: f64 = model
        .consequents()
        .chunks_exact(w)
        .flat_map(|b| &b[1..])
        .map(|v| v * v)
        .sum();
    0.5 * lambda * sq
}

/// Unmasked batch loss.
pub fn loss(model: &TskModel, rows: &[&[f64]], targets: &[f64], lambda: f64) -> Result<f64> {
    check_batch(model, rows, targets)?;
    let sse: f64 = rows
        .iter()
        .zip(targets)
        .map(|(x, y)| {
            let e = y - model.predict(x);
            e * e
        })
        .sum();
    Ok(0.5 * sse + penalty(model, lambda))
}

/// Gradient of the batch loss with one drop mask per example.
pub fn gradients(
    model: &TskModel,
    rows: &[&[f64]],
    targets: &[f64],
    lambda: f64,
    masks: &[DropMask],
) -> Result<GradientVector> {
    loss_and_gradients(model, rows, targets, lambda, masks).map(|(_, g)| g)
}

/// Masked batch loss together with its gradient.
///
/// For example `n`, a parameter that did not take part in computing `y(x_n)`
/// gets no contribution from it: consequents of dropped rules, and MF
/// parameters whose grade was replaced by 1 in a given rule. The penalty
/// gradient `lambda * b[r][m]` is added once for the whole batch.
pub fn loss_and_gradients(
    model: &TskModel,
    rows: &[&[f64]],
    targets: &[f64],
    lambda: f64,
    masks: &[DropMask],
) -> Result<(f64, GradientVector)> {
    check_batch(model, rows, targets)?;
    if masks.len() != rows.len() {
        return Err(Error::MaskShapeMismatch {
            expected: rows.len(),
            actual: masks.len(),
        });
    }
    for mask in masks {
        mask.check(model.grid())?;
    }

    let inputs = model.inputs();
    let k = model.mfs_per_input();
    let n_mfs = inputs * k;
    let width = inputs + 1;
    let mut grad = GradientVector::zeros(model.num_params());
    let (g_ante, g_cons) = grad.split_at_mut(2 * n_mfs);
    let (g_center, g_sigma) = g_ante.split_at_mut(n_mfs);
    let mut sse = 0.0;

    for ((x, &y), mask) in rows.iter().zip(targets).zip(masks) {
        let fw = model.forward(x, mask);
        let err = fw.output - y;
        sse += err * err;

        if fw.firing_sum > 0.0 {
            let s = fw.firing_sum;
            for r in 0..model.rules() {
                let f = fw.firing[r];
                if f == 0.0 {
                    continue;
                }
                let w = err * f / s;
                let b = &mut g_cons[r * width..(r + 1) * width];
                b[0] += w;
                for (gb, xm) in b[1..].iter_mut().zip(x.iter()) {
                    *gb += w * xm;
                }

                let d_f = err * (fw.rule_outputs[r] - fw.output) / s;
                for (m, &i) in model.grid().rule_antecedents(r).iter().enumerate() {
                    let slot = m * k + i;
                    if !mask.slot_kept(r, m, inputs, slot) {
                        continue;
                    }
                    let mf = &model.mfs()[slot];
                    let d = x[m] - mf.center;
                    let sigma = mf.sigma();
                    let t = d_f * f * d / (sigma * sigma);
                    g_center[slot] += t;
                    g_sigma[slot] += t * d / sigma;
                }
            }
        } else {
            // Every kept rule underflowed: the output is the plain mean of the kept
            // rule outputs, which does not depend on the antecedents.
            let kept: Vec<usize> = (0..model.rules()).filter(|&r| mask.rule_kept(r)).collect();
            let w = err / kept.len().max(1) as f64;
            for r in kept {
                let b = &mut g_cons[r * width..(r + 1) * width];
                b[0] += w;
                for (gb, xm) in b[1..].iter_mut().zip(x.iter()) {
                    *gb += w * xm;
                }
            }
        }
    }

    if lambda != 0.0 {
        for (g, b) in g_cons
            .chunks_exact_mut(width)
            .zip(model.consequents().chunks_exact(width))
        {
            for (gm, bm) in g[1..].iter_mut().zip(&b[1..]) {
                *gm += lambda * bm;
            }
        }
    }

    Ok((0.5 * sse + penalty(model, lambda), grad))
}

/// Central-difference gradient of the unmasked loss.
pub fn finite_diff_grad(
    model: &TskModel,
    rows: &[&[f64]],
    targets: &[f64],
    lambda: f64,
    h: f64,
) -> Result<GradientVector> {
    if !(h > 0.0) {
        return Err(Error::Config(format!("step must be positive, got {h}")));
    }
    let theta = model.flatten();
    let mut probe = model.clone();
    let mut shifted = theta.clone();
    let mut grad = GradientVector::zeros(theta.len());
    for i in 0..theta.len() {
        shifted[i] = theta[i] + h;
        probe.set_params(&shifted)?;
        let plus = loss(&probe, rows, targets, lambda)?;
        shifted[i] = theta[i] - h;
        probe.set_params(&shifted)?;
        let minus = loss(&probe, rows, targets, lambda)?;
        shifted[i] = theta[i];
        grad[i] = (plus - minus) / (2.0 * h);
    }
    Ok(grad)
}

/// Worst-case agreement between an analytic gradient and an oracle.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GradComparison {
    /// Largest `|a - o| / |o|` over coordinates with `|o| >= GRAD_CHECK_ABS_FLOOR`.
    pub max_rel_error: f64,
    /// Largest `|a - o|` over coordinates with `|o| < GRAD_CHECK_ABS_FLOOR`.
    pub max_abs_error: f64,
}

impl GradComparison {
    pub fn passes(&self, rel_tol: f64) -> bool {
        self.max_rel_error <= rel_tol && self.max_abs_error <= GRAD_CHECK_ABS_FLOOR
    }
}

pub fn compare_gradients(analytic: &[f64], oracle: &[f64]) -> GradComparison {
    let mut out = GradComparison::default();
    for (a, o) in analytic.iter().zip(oracle) {
        let diff = (a - o).abs();
        if o.abs() < GRAD_CHECK_ABS_FLOOR {
            out.max_abs_error = out.max_abs_error.max(diff);
        } else {
            out.max_rel_error = out.max_rel_error.max(diff / o.abs());
        }
    }
    out
}

/// A random model with a small batch, scaled like z-normalized data.
#[derive(Clone, Debug)]
pub struct GradCheckInstance {
    pub model: TskModel,
    pub rows: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub lambda: f64,
}

impl GradCheckInstance {
    pub fn random<R: Rng>(
        inputs: usize,
        mfs: usize,
        batch: usize,
        lambda: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let grid = RuleGrid::new(inputs, mfs)?;
        let mut model = TskModel::zeros(grid);
        for m in 0..inputs {
            for i in 0..mfs {
                let center = rng.random_range(-1.5..1.5);
                let sigma = rng.random_range(0.5..1.5);
                *model.mf_mut(m, i) = GaussianMf::new(center, sigma);
            }
        }
        for r in 0..model.rules() {
            for b in model.consequent_mut(r) {
                *b = rng.random_range(-1.0..1.0);
            }
        }
        let rows = (0..batch)
            .map(|_| (0..inputs).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let targets = (0..batch).map(|_| rng.random_range(-1.0..1.0)).collect();
        Ok(Self {
            model,
            rows,
            targets,
            lambda,
        })
    }

    pub fn row_refs(&self) -> Vec<&[f64]> {
        self.rows.iter().map(Vec::as_slice).collect()
    }

    pub fn compare(&self, h: f64) -> Result<GradComparison> {
        let rows = self.row_refs();
        let masks = vec![DropMask::None; rows.len()];
        let analytic = gradients(&self.model, &rows, &self.targets, self.lambda, &masks)?;
        let oracle = finite_diff_grad(&self.model, &rows, &self.targets, self.lambda, h)?;
        Ok(compare_gradients(&analytic, &oracle))
    }
}

/// Summary of a batch of seeded gradient checks.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub inputs: usize,
    pub mfs: usize,
    /// Per-trial worst relative error, in trial order.
    pub rel_errors: Vec<f64>,
    pub max_abs_error: f64,
}

impl GradCheckReport {
    pub fn trials(&self) -> usize {
        self.rel_errors.len()
    }

    pub fn max_rel_error(&self) -> f64 {
        self.rel_errors.iter().copied().fold(0.0, f64::max)
    }

    pub fn median_rel_error(&self) -> f64 {
        if self.rel_errors.is_empty() {
            return 0.0;
        }
        let mut v = self.rel_errors.clone();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    }

    /// `key=value` lines; empty when no trials ran.
    pub fn to_text(&self) -> String {
        if self.rel_errors.is_empty() {
            return String::new();
        }
        format!(
            "inputs={}\nmfs={}\ntrials={}\nmax_rel_error={:e}\nmedian_rel_error={:e}\nmax_abs_error={:e}\n",
            self.inputs,
            self.mfs,
            self.trials(),
            self.max_rel_error(),
            self.median_rel_error(),
            self.max_abs_error
        )
    }
}

/// Runs `trials` seeded checks of the analytic gradient against central
/// differences (`h = 1e-6`, batch of 4, `lambda` alternating between 0 and 0.05).
pub fn gradient_check(inputs: usize, mfs: usize, trials: usize, seed: u64) -> Result<GradCheckReport> {
    let rules = RuleGrid::new(inputs, mfs)
        .map(|g| g.rules())
        .unwrap_or(usize::MAX);
    if rules > GRAD_CHECK_MAX_RULES {
        return Err(Error::GridTooLarge {
            rules,
            limit: GRAD_CHECK_MAX_RULES,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport {
        inputs,
        mfs,
        rel_errors: Vec::with_capacity(trials),
        max_abs_error: 0.0,
    };
    for t in 0..trials {
        let lambda = if t % 2 == 0 { 0.0 } else { 0.05 };
        let inst = GradCheckInstance::random(inputs, mfs, 4, lambda, &mut rng)?;
        let cmp = inst.compare(1e-6)?;
        report.rel_errors.push(cmp.max_rel_error);
        report.max_abs_error = report.max_abs_error.max(cmp.max_abs_error);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows_of(v: &[Vec<f64>]) -> Vec<&[f64]> {
        v.iter().map(Vec::as_slice).collect()
    }

    fn instance(seed: u64, lambda: f64) -> GradCheckInstance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GradCheckInstance::random(2, 2, 4, lambda, &mut rng).unwrap()
    }

    #[test]
    fn zero_model_zero_target_has_zero_loss() {
        let model = TskModel::zeros(RuleGrid::new(2, 2).unwrap());
        let rows = vec![vec![0.3, -1.2]];
        assert_eq!(loss(&model, &rows_of(&rows), &[0.0], 0.05).unwrap(), 0.0);
    }

    #[test]
    fn single_example_loss_is_half_squared_error() {
        let inst = instance(1, 0.0);
        let x = &inst.rows[0];
        let yhat = inst.model.predict(x);
        let l = loss(&inst.model, &[x.as_slice()], &[2.0], 0.0).unwrap();
        assert!((l - 0.5 * (2.0 - yhat).powi(2)).abs() < 1e-14);
    }

    #[test]
    fn penalty_skips_bias() {
        let mut model = TskModel::zeros(RuleGrid::new(1, 1).unwrap());
        model.consequent_mut(0).copy_from_slice(&[1.0, 2.0]);
        assert_eq!(penalty(&model, 2.0), 4.0);
        // zero data error: target equals the prediction
        let x = [0.5];
        let y = model.predict(&x);
        assert_eq!(loss(&model, &[&x], &[y], 2.0).unwrap(), 4.0);
    }

    #[test]
    fn empty_batch_rejected() {
        let model = TskModel::zeros(RuleGrid::new(1, 2).unwrap());
        assert!(matches!(loss(&model, &[], &[], 0.0), Err(Error::EmptyBatch)));
        assert!(matches!(
            gradients(&model, &[], &[], 0.0, &[]),
            Err(Error::EmptyBatch)
        ));
    }

    #[test]
    fn mask_count_and_shape_checked() {
        let inst = instance(2, 0.0);
        let rows = inst.row_refs();
        assert!(matches!(
            gradients(&inst.model, &rows, &inst.targets, 0.0, &[DropMask::None]),
            Err(Error::MaskShapeMismatch { expected: 4, actual: 1 })
        ));
        let masks = vec![DropMask::Rule(vec![true; 3]); 4];
        assert!(matches!(
            gradients(&inst.model, &rows, &inst.targets, 0.0, &masks),
            Err(Error::MaskShapeMismatch { expected: 4, actual: 3 })
        ));
    }

    #[test]
    fn dropped_rule_consequents_get_no_gradient() {
        let inst = instance(3, 0.0);
        let rows = inst.row_refs();
        let masks = vec![DropMask::Rule(vec![true, false, true, true]); 4];
        let g = gradients(&inst.model, &rows, &inst.targets, 0.0, &masks).unwrap();
        for c in 0..3 {
            assert_eq!(g[inst.model.consequent_index(1, c)], 0.0);
        }
        assert!(g[inst.model.consequent_index(0, 0)] != 0.0);
    }

    #[test]
    fn penalty_gradient_is_lambda_b() {
        let mut inst = instance(4, 0.05);
        let rows = inst.row_refs();
        let masks = vec![DropMask::None; 4];
        let with = gradients(&inst.model, &rows, &inst.targets, 0.05, &masks).unwrap();
        let without = gradients(&inst.model, &rows, &inst.targets, 0.0, &masks).unwrap();
        let m = &inst.model;
        for i in 0..with.len() {
            let diff = with[i] - without[i];
            let want = if i >= 2 * m.inputs() * m.mfs_per_input()
                && !(i - 2 * m.inputs() * m.mfs_per_input()).is_multiple_of(m.inputs() + 1)
            {
                0.05 * m.flatten()[i]
            } else {
                0.0
            };
            assert!((diff - want).abs() < 1e-15, "coordinate {i}");
        }

        // zero consequents contribute nothing through the penalty
        for r in 0..inst.model.rules() {
            inst.model.consequent_mut(r).fill(0.0);
        }
        let rows = inst.row_refs();
        let a = gradients(&inst.model, &rows, &inst.targets, 0.05, &masks).unwrap();
        let b = gradients(&inst.model, &rows, &inst.targets, 0.0, &masks).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn all_keep_rule_mask_is_bit_exact() {
        let inst = instance(5, 0.05);
        let rows = inst.row_refs();
        let none = vec![DropMask::None; 4];
        let keep = vec![DropMask::Rule(vec![true; 4]); 4];
        assert_eq!(
            loss_and_gradients(&inst.model, &rows, &inst.targets, 0.05, &none).unwrap(),
            loss_and_gradients(&inst.model, &rows, &inst.targets, 0.05, &keep).unwrap()
        );
    }

    #[test]
    fn analytic_matches_central_differences() {
        for seed in 0..20 {
            let cmp = instance(100 + seed, 0.05).compare(1e-6).unwrap();
            assert!(cmp.passes(1e-5), "seed {seed}: {cmp:?}");
        }
    }

    #[test]
    fn consequent_gradient_matches_oracle_tightly() {
        // The loss is quadratic in the consequents, so central differences are
        // exact up to rounding there.
        let inst = instance(6, 0.05);
        let rows = inst.row_refs();
        let masks = vec![DropMask::None; 4];
        let a = gradients(&inst.model, &rows, &inst.targets, 0.05, &masks).unwrap();
        let o = finite_diff_grad(&inst.model, &rows, &inst.targets, 0.05, 1e-6).unwrap();
        let start = inst.model.consequent_index(0, 0);
        for i in start..a.len() {
            assert!((a[i] - o[i]).abs() < 1e-8, "{i}: {} vs {}", a[i], o[i]);
        }
    }

    #[test]
    fn halving_step_quarters_truncation_error() {
        let inst = instance(7, 0.0);
        let rows = inst.row_refs();
        let masks = vec![DropMask::None; 4];
        let a = gradients(&inst.model, &rows, &inst.targets, 0.0, &masks).unwrap();
        let coarse = finite_diff_grad(&inst.model, &rows, &inst.targets, 0.0, 0.02).unwrap();
        let fine = finite_diff_grad(&inst.model, &rows, &inst.targets, 0.0, 0.01).unwrap();
        let i = inst.model.sigma_index(0, 0);
        let ratio = (coarse[i] - a[i]).abs() / (fine[i] - a[i]).abs();
        assert!((ratio - 4.0).abs() < 0.2, "ratio {ratio}");
    }

    #[test]
    fn oracle_vanishes_at_perfect_fit() {
        let mut inst = instance(8, 0.0);
        inst.targets = inst.rows.iter().map(|x| inst.model.predict(x)).collect();
        let rows = inst.row_refs();
        let o = finite_diff_grad(&inst.model, &rows, &inst.targets, 0.0, 1e-6).unwrap();
        assert!(o.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn batch_gradients_are_additive() {
        let inst = instance(9, 0.0);
        let rows = inst.row_refs();
        let masks = vec![DropMask::None; 4];
        let whole = gradients(&inst.model, &rows, &inst.targets, 0.0, &masks).unwrap();
        let a = gradients(&inst.model, &rows[..2], &inst.targets[..2], 0.0, &masks[..2]).unwrap();
        let b = gradients(&inst.model, &rows[2..], &inst.targets[2..], 0.0, &masks[2..]).unwrap();
        for i in 0..whole.len() {
            assert!((whole[i] - (a[i] + b[i])).abs() <= 1e-12 * whole[i].abs().max(1.0));
        }
    }

    #[test]
    fn grid_limit_enforced() {
        assert!(matches!(
            gradient_check(10, 4, 1, 0),
            Err(Error::GridTooLarge { .. })
        ));
        let empty = gradient_check(2, 2, 0, 0).unwrap();
        assert_eq!(empty.to_text(), "");
    }
}
