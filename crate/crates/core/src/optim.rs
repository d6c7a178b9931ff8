//! Parameter update rules: plain gradient steps with Jang's adaptive global
//! rate, Adam, and AdaBound.
//!
//! Adam is AdaBound with the bounds opened to `[0, +inf)`; both go through
//! [`adabound_step`].

use std::str::FromStr;

use crate::error::{Error, Result};

/// How the learning rate is chosen in a training run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum LrScheme {
    /// Plain gradient step with Jang's x1.1 / x0.9 global rate rule.
    FixedJang,
    Adam,
    #[default]
    AdaBound,
}

impl FromStr for LrScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fixed" | "jang" | "fixedjang" | "gd" => Ok(Self::FixedJang),
            "adam" => Ok(Self::Adam),
            "adabound" => Ok(Self::AdaBound),
            other => Err(Error::Config(format!("unknown learning-rate scheme '{other}'"))),
        }
    }
}

fn check_len(theta: &[f64], g: &[f64]) -> Result<()> {
    if theta.len() == g.len() {
        Ok(())
    } else {
        Err(Error::LengthMismatch {
            expected: theta.len(),
            actual: g.len(),
        })
    }
}

/// `theta -= alpha * g`.
pub fn sgd_step(theta: &mut [f64], g: &[f64], alpha: f64) -> Result<()> {
    check_len(theta, g)?;
    for (t, gi) in theta.iter_mut().zip(g) {
        *t -= alpha * gi;
    }
    Ok(())
}

/// Jang's heuristic for a global learning rate.
///
/// After four successive loss decreases the rate grows by 10%; after two
/// successive increase-then-decrease pairs it shrinks by 10%. Once a pattern
/// fires, the window restarts from the latest loss, so patterns never overlap.
#[derive(Clone, Debug, PartialEq)]
pub struct JangLrState {
    alpha: f64,
    window: Vec<f64>,
}

impl JangLrState {
    const WINDOW: usize = 5;
    pub const GROW: f64 = 1.1;
    pub const SHRINK: f64 = 0.9;

    pub fn new(alpha: f64) -> Self {
        assert!(alpha > 0.0, "learning rate must be positive");
        Self {
            alpha,
            window: Vec::with_capacity(Self::WINDOW),
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Records the latest loss and returns the (possibly adjusted) rate.
    pub fn update(&mut self, loss: f64) -> f64 {
        self.window.push(loss);
        if self.window.len() > Self::WINDOW {
            self.window.remove(0);
        }
        if self.window.len() == Self::WINDOW {
            let w = &self.window;
            let down = |i: usize| w[i + 1] < w[i];
            let up = |i: usize| w[i + 1] > w[i];
            let fired = if (0..4).all(down) {
                self.alpha *= Self::GROW;
                true
            } else if up(0) && down(1) && up(2) && down(3) {
                self.alpha *= Self::SHRINK;
                true
            } else {
                false
            };
            if fired {
                self.window.drain(..Self::WINDOW - 1);
            }
        }
        self.alpha
    }
}

/// Lower AdaBound bound `a - a / ((1 - beta2) k + 1)`; 0 at `k = 0`.
pub fn bound_lower(k: u64, beta2: f64, alpha_final: f64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    alpha_final - alpha_final / ((1.0 - beta2) * k as f64 + 1.0)
}

/// Upper AdaBound bound `a + a / ((1 - beta2) k)`; `+inf` at `k = 0`.
pub fn bound_upper(k: u64, beta2: f64, alpha_final: f64) -> f64 {
    if k == 0 {
        return f64::INFINITY;
    }
    alpha_final + alpha_final / ((1.0 - beta2) * k as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaBoundHyper {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// The rate both bounds converge to.
    pub alpha_final: f64,
}

impl Default for AdaBoundHyper {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            alpha_final: 0.01,
        }
    }
}

impl AdaBoundHyper {
    /// Clipping interval for step `k`.
    pub fn bounds(&self, k: u64) -> (f64, f64) {
        (
            bound_lower(k, self.beta2, self.alpha_final),
            bound_upper(k, self.beta2, self.alpha_final),
        )
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub k: u64,
}

impl MomentState {
    pub fn new(dim: usize) -> Self {
        Self {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            k: 0,
        }
    }
}

/// Realized per-coordinate learning rates of one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub mean_rate: f64,
    pub min_rate: f64,
    pub max_rate: f64,
}

impl StepStats {
    pub fn uniform(rate: f64) -> Self {
        Self {
            mean_rate: rate,
            min_rate: rate,
            max_rate: rate,
        }
    }
}

/// One AdaBound step with clipping interval `[lower, upper]`.
///
/// The counter is incremented first, so bias correction uses the
/// post-increment `k`. Passing `(0, +inf)` gives Adam.
pub fn adabound_step(
    state: &mut MomentState,
    theta: &mut [f64],
    g: &[f64],
    hyper: &AdaBoundHyper,
    lower: f64,
    upper: f64,
) -> Result<StepStats> {
    check_len(theta, g)?;
    check_len(theta, &state.m)?;
    if let Some((index, &value)) = g.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFiniteGradient { index, value });
    }
    debug_assert!(lower <= upper);

    state.k += 1;
    let k = i32::try_from(state.k).unwrap_or(i32::MAX);
    let bc1 = 1.0 - hyper.beta1.powi(k);
    let bc2 = 1.0 - hyper.beta2.powi(k);

    let mut sum = 0.0;
    let mut min_rate = f64::INFINITY;
    let mut max_rate = f64::NEG_INFINITY;
    for (((t, gi), m), v) in theta
        .iter_mut()
        .zip(g)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = hyper.beta1 * *m + (1.0 - hyper.beta1) * gi;
        *v = hyper.beta2 * *v + (1.0 - hyper.beta2) * gi * gi;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        let rate = (hyper.alpha / (v_hat.sqrt() + hyper.epsilon))
            .min(upper)
            .max(lower);
        debug_assert!(lower <= rate && rate <= upper);
        *t -= rate * m_hat;
        sum += rate;
        min_rate = min_rate.min(rate);
        max_rate = max_rate.max(rate);
    }
    Ok(StepStats {
        mean_rate: if theta.is_empty() {
            0.0
        } else {
            sum / theta.len() as f64
        },
        min_rate,
        max_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_examples() {
        let mut t = vec![1.0, 2.0];
        sgd_step(&mut t, &[0.0, 0.0], 0.01).unwrap();
        assert_eq!(t, vec![1.0, 2.0]);
        let mut t = vec![1.0];
        sgd_step(&mut t, &[2.0], 0.5).unwrap();
        assert_eq!(t, vec![0.0]);
        let mut t = vec![0.0, 0.0];
        sgd_step(&mut t, &[1.0, -1.0], 0.01).unwrap();
        assert_eq!(t, vec![-0.01, 0.01]);
        assert!(matches!(
            sgd_step(&mut t, &[1.0], 0.1),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn jang_grows_after_four_decreases() {
        let mut s = JangLrState::new(0.01);
        let rates: Vec<f64> = [5.0, 4.0, 3.0, 2.0, 1.0].iter().map(|&l| s.update(l)).collect();
        assert_eq!(&rates[..4], &[0.01; 4]);
        assert!((rates[4] - 0.011).abs() < 1e-15);
        // window restarted: three more decreases are not enough
        for l in [0.9, 0.8, 0.7] {
            assert!((s.update(l) - 0.011).abs() < 1e-15);
        }
        assert!((s.update(0.6) - 0.0121).abs() < 1e-15);
    }

    #[test]
    fn jang_shrinks_after_two_oscillations() {
        let mut s = JangLrState::new(0.01);
        let mut last = 0.0;
        for l in [1.0, 2.0, 1.5, 2.5, 2.0] {
            last = s.update(l);
        }
        assert!((last - 0.009).abs() < 1e-15);
    }

    #[test]
    fn jang_ignores_monotone_increase() {
        let mut s = JangLrState::new(0.01);
        for l in 0..20 {
            assert_eq!(s.update(l as f64), 0.01);
        }
    }

    #[test]
    fn bound_values() {
        assert_eq!(bound_lower(0, 0.999, 0.01), 0.0);
        assert_eq!(bound_upper(0, 0.999, 0.01), f64::INFINITY);
        assert!((bound_lower(1000, 0.999, 0.01) - 0.005).abs() < 1e-12);
        assert!((bound_upper(1000, 0.999, 0.01) - 0.02).abs() < 1e-12);
        let far = 1u64 << 50;
        assert!((bound_lower(far, 0.999, 0.01) - 0.01).abs() < 1e-12);
        assert!((bound_upper(far, 0.999, 0.01) - 0.01).abs() < 1e-12);
    }

    #[test]
    fn first_step_bias_correction_recovers_gradient() {
        let hyper = AdaBoundHyper::default();
        let g = [0.3, -2.0, 1e-3];
        let mut st = MomentState::new(3);
        let mut theta = [0.0; 3];
        adabound_step(&mut st, &mut theta, &g, &hyper, 0.0, f64::INFINITY).unwrap();
        // m_hat == g up to the rounding of (1 - beta1) * g / (1 - beta1)
        for (m, gi) in st.m.iter().zip(g) {
            assert!((m / (1.0 - hyper.beta1) - gi).abs() <= 1e-15 * gi.abs());
        }
        assert_eq!(st.k, 1);
    }

    #[test]
    fn zero_gradient_leaves_theta() {
        let hyper = AdaBoundHyper::default();
        let mut st = MomentState::new(2);
        let mut theta = [1.5, -0.5];
        let (l, u) = hyper.bounds(1);
        adabound_step(&mut st, &mut theta, &[0.0, 0.0], &hyper, l, u).unwrap();
        assert_eq!(theta, [1.5, -0.5]);
    }

    #[test]
    fn rejects_non_finite_gradient() {
        let mut st = MomentState::new(2);
        let mut theta = [0.0; 2];
        let err = adabound_step(
            &mut st,
            &mut theta,
            &[1.0, f64::NAN],
            &AdaBoundHyper::default(),
            0.0,
            1.0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { index: 1, .. }));
    }

    #[test]
    fn rates_are_clipped() {
        let hyper = AdaBoundHyper::default();
        let mut st = MomentState::new(3);
        let mut theta = [0.0; 3];
        for k in 1..=200u64 {
            let g = [1e-6 * k as f64, 5.0, -(k as f64).sin()];
            let (l, u) = hyper.bounds(k);
            let s = adabound_step(&mut st, &mut theta, &g, &hyper, l, u).unwrap();
            assert!(l <= s.min_rate && s.max_rate <= u, "k={k}: {s:?} not in [{l}, {u}]");
        }
    }
}
