//! Grid-partition TSK fuzzy system with shared Gaussian membership functions.
//!
//! Every input `m` owns `Mm` Gaussian MFs. A rule picks one MF per input, and the
//! rule base is the full Cartesian product, so there are `Mm^M` rules and each MF
//! is shared by `Mm^(M-1)` of them. Each rule has an affine consequent
//! `y_r(x) = b[r][0] + sum_m b[r][m] * x_m`, and the system output is the
//! firing-level-weighted average of the rule consequents.
//!
//! Parameter vector layout (see [`TskModel::flatten`]):
//!
//! ```text
//! [ c(0,0) .. c(0,Mm-1) c(1,0) .. c(M-1,Mm-1) | sigma (same order) | b[0][0..=M] .. b[R-1][0..=M] ]
//! ```

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Floor applied to every MF width, in normalized-feature units.
pub const SIGMA_MIN: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianMf {
    pub center: f64,
    sigma: f64,
}

impl GaussianMf {
    /// Widths below [`SIGMA_MIN`] are raised to it.
    pub fn new(center: f64, sigma: f64) -> Self {
        Self {
            center,
            sigma: sigma.max(SIGMA_MIN),
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn set_sigma(&mut self, sigma: f64) {
        self.sigma = sigma.max(SIGMA_MIN);
    }

    #[inline]
    pub fn grade(&self, x: f64) -> f64 {
        membership(self, x)
    }
}

/// Gaussian membership grade `exp(-(x - c)^2 / (2 sigma^2))`.
#[inline]
pub fn membership(mf: &GaussianMf, x: f64) -> f64 {
    let d = x - mf.center;
    (-(d * d) / (2.0 * mf.sigma * mf.sigma)).exp()
}

/// Number of trainable parameters: `2*M*Mm + (M+1)*Mm^M`.
pub fn param_count(inputs: usize, mfs: usize) -> Result<usize> {
    let overflow = || Error::ParamCountOverflow { inputs, mfs };
    let exp = u32::try_from(inputs).map_err(|_| overflow())?;
    let rules = mfs.checked_pow(exp).ok_or_else(overflow)?;
    let antecedent = 2usize
        .checked_mul(inputs)
        .and_then(|v| v.checked_mul(mfs))
        .ok_or_else(overflow)?;
    let consequent = (inputs + 1).checked_mul(rules).ok_or_else(overflow)?;
    antecedent.checked_add(consequent).ok_or_else(overflow)
}

/// Full grid partition of `inputs` dimensions with `mfs` MFs each.
///
/// Rule indices are mixed-radix numbers over the MF indices with input 0 as the
/// most significant digit, so for `M = 2, Mm = 2` the rules are
/// `(0,0), (0,1), (1,0), (1,1)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RuleGrid {
    inputs: usize,
    mfs: usize,
    rules: usize,
    antecedents: Vec<usize>,
}

impl RuleGrid {
    pub fn new(inputs: usize, mfs: usize) -> Result<Self> {
        if inputs == 0 {
            return Err(Error::InvalidGrid("at least one input is required".into()));
        }
        if mfs == 0 {
            return Err(Error::InvalidGrid("at least one MF per input is required".into()));
        }
        param_count(inputs, mfs)?;
        let rules = mfs.pow(inputs as u32);
        let mut antecedents = vec![0; rules * inputs];
        for r in 0..rules {
            let mut rem = r;
            for m in (0..inputs).rev() {
                antecedents[r * inputs + m] = rem % mfs;
                rem /= mfs;
            }
        }
        Ok(Self {
            inputs,
            mfs,
            rules,
            antecedents,
        })
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn mfs_per_input(&self) -> usize {
        self.mfs
    }

    pub fn rules(&self) -> usize {
        self.rules
    }

    /// MF index used by rule `rule` on input `input`.
    #[inline]
    pub fn antecedent(&self, rule: usize, input: usize) -> usize {
        self.antecedents[rule * self.inputs + input]
    }

    pub fn rule_antecedents(&self, rule: usize) -> &[usize] {
        &self.antecedents[rule * self.inputs..(rule + 1) * self.inputs]
    }

    /// Rules whose antecedent on `input` is MF `mf`.
    pub fn rules_using(&self, input: usize, mf: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.rules).filter(move |&r| self.antecedent(r, input) == mf)
    }

    pub fn num_params(&self) -> usize {
        2 * self.inputs * self.mfs + (self.inputs + 1) * self.rules
    }
}

/// Which stochastic drop regularizer a training run uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum DropVariant {
    #[default]
    None,
    Rule,
    Mf,
    Membership,
}

impl FromStr for DropVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Self::None),
            "rule" | "droprule" => Ok(Self::Rule),
            "mf" | "dropmf" => Ok(Self::Mf),
            "membership" | "dropmembership" => Ok(Self::Membership),
            other => Err(Error::Config(format!("unknown drop variant '{other}'"))),
        }
    }
}

/// Per-example keep flags. `true` means keep.
///
/// * `Rule`: one flag per rule; a dropped rule fires at 0.
/// * `Mf`: one flag per `(input, mf)` in input-major order; a dropped MF grades 1 in every rule.
/// * `Membership`: one flag per `(rule, input)` in rule-major order; a dropped slot grades 1 in that rule only.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum DropMask {
    #[default]
    None,
    Rule(Vec<bool>),
    Mf(Vec<bool>),
    Membership(Vec<bool>),
}

impl DropMask {
    pub fn variant(&self) -> DropVariant {
        match self {
            DropMask::None => DropVariant::None,
            DropMask::Rule(_) => DropVariant::Rule,
            DropMask::Mf(_) => DropVariant::Mf,
            DropMask::Membership(_) => DropVariant::Membership,
        }
    }

    pub fn check(&self, grid: &RuleGrid) -> Result<()> {
        let (expected, actual) = match self {
            DropMask::None => return Ok(()),
            DropMask::Rule(k) => (grid.rules(), k.len()),
            DropMask::Mf(k) => (grid.inputs() * grid.mfs_per_input(), k.len()),
            DropMask::Membership(k) => (grid.rules() * grid.inputs(), k.len()),
        };
        if expected == actual {
            Ok(())
        } else {
            Err(Error::MaskShapeMismatch { expected, actual })
        }
    }

    #[inline]
    pub(crate) fn rule_kept(&self, rule: usize) -> bool {
        match self {
            DropMask::Rule(k) => k[rule],
            _ => true,
        }
    }

    /// Whether the grade of `(rule, input)` using MF slot `mf_slot` is the true grade
    /// (as opposed to replaced by 1).
    #[inline]
    pub(crate) fn slot_kept(&self, rule: usize, input: usize, inputs: usize, mf_slot: usize) -> bool {
        match self {
            DropMask::Mf(k) => k[mf_slot],
            DropMask::Membership(k) => k[rule * inputs + input],
            _ => true,
        }
    }
}

/// Per-input statistics used to initialize the MFs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureStats {
    pub min: f64,
    pub max: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TskModel {
    grid: RuleGrid,
    mfs: Vec<GaussianMf>,
    consequents: Vec<f64>,
}

/// Intermediate values of one forward pass.
#[derive(Clone, Debug)]
pub(crate) struct Forward {
    /// Masked firing levels.
    pub firing: Vec<f64>,
    pub rule_outputs: Vec<f64>,
    pub firing_sum: f64,
    pub output: f64,
}

impl TskModel {
    pub fn new(grid: RuleGrid, mfs: Vec<GaussianMf>, consequents: Vec<f64>) -> Result<Self> {
        let n_mfs = grid.inputs() * grid.mfs_per_input();
        if mfs.len() != n_mfs {
            return Err(Error::LengthMismatch {
                expected: n_mfs,
                actual: mfs.len(),
            });
        }
        let n_cons = grid.rules() * (grid.inputs() + 1);
        if consequents.len() != n_cons {
            return Err(Error::LengthMismatch {
                expected: n_cons,
                actual: consequents.len(),
            });
        }
        Ok(Self {
            grid,
            mfs,
            consequents,
        })
    }

    pub fn grid(&self) -> &RuleGrid {
        &self.grid
    }

    pub fn inputs(&self) -> usize {
        self.grid.inputs()
    }

    pub fn mfs_per_input(&self) -> usize {
        self.grid.mfs_per_input()
    }

    pub fn rules(&self) -> usize {
        self.grid.rules()
    }

    pub fn num_params(&self) -> usize {
        self.grid.num_params()
    }

    pub fn mf(&self, input: usize, mf: usize) -> &GaussianMf {
        &self.mfs[input * self.grid.mfs_per_input() + mf]
    }

    pub fn mf_mut(&mut self, input: usize, mf: usize) -> &mut GaussianMf {
        let k = self.grid.mfs_per_input();
        &mut self.mfs[input * k + mf]
    }

    pub fn mfs(&self) -> &[GaussianMf] {
        &self.mfs
    }

    /// Consequent coefficients of `rule`; index 0 is the bias.
    pub fn consequent(&self, rule: usize) -> &[f64] {
        let w = self.inputs() + 1;
        &self.consequents[rule * w..(rule + 1) * w]
    }

    pub fn consequent_mut(&mut self, rule: usize) -> &mut [f64] {
        let w = self.inputs() + 1;
        &mut self.consequents[rule * w..(rule + 1) * w]
    }

    pub fn consequents(&self) -> &[f64] {
        &self.consequents
    }

    #[inline]
    pub fn rule_output(&self, rule: usize, x: &[f64]) -> f64 {
        let b = self.consequent(rule);
        b[1..].iter().zip(x).fold(b[0], |acc, (w, v)| acc + w * v)
    }

    /// Membership grades of `x` in every MF, input-major.
    pub fn grades(&self, x: &[f64]) -> Vec<f64> {
        let k = self.mfs_per_input();
        self.mfs
            .iter()
            .enumerate()
            .map(|(j, mf)| mf.grade(x[j / k]))
            .collect()
    }

    /// Firing level of every rule, with `mask` applied.
    pub fn firing_levels(&self, x: &[f64], mask: &DropMask) -> Vec<f64> {
        assert_eq!(x.len(), self.inputs(), "input length");
        let grades = self.grades(x);
        self.firing_from_grades(&grades, mask)
    }

    fn firing_from_grades(&self, grades: &[f64], mask: &DropMask) -> Vec<f64> {
        let inputs = self.inputs();
        let k = self.mfs_per_input();
        (0..self.rules())
            .map(|r| {
                if !mask.rule_kept(r) {
                    return 0.0;
                }
                let mut f = 1.0;
                for (m, &i) in self.grid.rule_antecedents(r).iter().enumerate() {
                    let slot = m * k + i;
                    if mask.slot_kept(r, m, inputs, slot) {
                        f *= grades[slot];
                    }
                }
                f
            })
            .collect()
    }

    pub(crate) fn forward(&self, x: &[f64], mask: &DropMask) -> Forward {
        let grades = self.grades(x);
        let firing = self.firing_from_grades(&grades, mask);
        let rule_outputs: Vec<f64> = (0..self.rules()).map(|r| self.rule_output(r, x)).collect();
        let firing_sum: f64 = firing.iter().sum();
        let output = if firing_sum > 0.0 {
            firing
                .iter()
                .zip(&rule_outputs)
                .map(|(f, y)| f * y)
                .sum::<f64>()
                / firing_sum
        } else {
            degenerate_output(&rule_outputs, mask)
        };
        Forward {
            firing,
            rule_outputs,
            firing_sum,
            output,
        }
    }

    /// Firing-level-weighted average of the rule outputs, using every rule.
    ///
    /// If every firing level underflows to zero the unweighted mean of the rule
    /// outputs is returned instead.
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.forward(x, &DropMask::None).output
    }

    /// Like [`predict`](Self::predict) but reports underflow instead of falling back.
    pub fn try_predict(&self, x: &[f64]) -> Result<f64> {
        let fw = self.forward(x, &DropMask::None);
        if fw.firing_sum > 0.0 {
            Ok(fw.output)
        } else {
            Err(Error::DegenerateFiring)
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.num_params());
        theta.extend(self.mfs.iter().map(|mf| mf.center));
        theta.extend(self.mfs.iter().map(|mf| mf.sigma));
        theta.extend_from_slice(&self.consequents);
        theta
    }

    /// Rebuilds a model from a flat parameter vector. Widths are clamped to [`SIGMA_MIN`].
    pub fn unflatten(grid: RuleGrid, theta: &[f64]) -> Result<Self> {
        let mut model = Self::zeros(grid);
        model.set_params(theta)?;
        Ok(model)
    }

    /// Overwrites every parameter from `theta`, clamping widths to [`SIGMA_MIN`].
    pub fn set_params(&mut self, theta: &[f64]) -> Result<()> {
        let d = self.num_params();
        if theta.len() != d {
            return Err(Error::LengthMismatch {
                expected: d,
                actual: theta.len(),
            });
        }
        let n = self.mfs.len();
        for (j, mf) in self.mfs.iter_mut().enumerate() {
            mf.center = theta[j];
            mf.set_sigma(theta[n + j]);
        }
        self.consequents.copy_from_slice(&theta[2 * n..]);
        Ok(())
    }

    /// All-zero consequents, MFs centered at 0 with unit width.
    pub fn zeros(grid: RuleGrid) -> Self {
        let n_mfs = grid.inputs() * grid.mfs_per_input();
        let n_cons = grid.rules() * (grid.inputs() + 1);
        Self {
            grid,
            mfs: vec![GaussianMf::new(0.0, 1.0); n_mfs],
            consequents: vec![0.0; n_cons],
        }
    }

    /// Flat index of `c(input, mf)`.
    pub fn center_index(&self, input: usize, mf: usize) -> usize {
        input * self.mfs_per_input() + mf
    }

    /// Flat index of `sigma(input, mf)`.
    pub fn sigma_index(&self, input: usize, mf: usize) -> usize {
        self.mfs.len() + self.center_index(input, mf)
    }

    /// Flat index of `b[rule][coef]`; coefficient 0 is the bias.
    pub fn consequent_index(&self, rule: usize, coef: usize) -> usize {
        2 * self.mfs.len() + rule * (self.inputs() + 1) + coef
    }

    /// Text checkpoint: `M=<int>`, `Mm=<int>`, then the flat parameters one per line.
    pub fn to_checkpoint(&self) -> String {
        let mut out = format!("M={}\nMm={}\n", self.inputs(), self.mfs_per_input());
        for v in self.flatten() {
            writeln!(out, "{v:?}").expect("writing to a String cannot fail");
        }
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let mut header = |key: &str| -> Result<usize> {
            let line = lines
                .next()
                .ok_or_else(|| Error::Checkpoint(format!("missing {key} header")))?;
            line.strip_prefix(key)
                .and_then(|rest| rest.strip_prefix('='))
                .ok_or_else(|| Error::Checkpoint(format!("expected '{key}=<int>', got '{line}'")))?
                .parse()
                .map_err(|_| Error::Checkpoint(format!("bad integer in '{line}'")))
        };
        let inputs = header("M")?;
        let mfs = header("Mm")?;
        let theta = lines
            .map(|l| {
                l.parse::<f64>()
                    .map_err(|_| Error::Checkpoint(format!("bad value '{l}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::unflatten(RuleGrid::new(inputs, mfs)?, &theta)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_checkpoint())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&std::fs::read_to_string(path)?)
    }
}

/// Output when all firing levels are zero: the plain mean of the outputs of the
/// rules the mask keeps.
fn degenerate_output(rule_outputs: &[f64], mask: &DropMask) -> f64 {
    let (sum, n) = rule_outputs
        .iter()
        .enumerate()
        .filter(|&(r, _)| mask.rule_kept(r))
        .fold((0.0, 0usize), |(s, n), (_, y)| (s + y, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Initial model: `mfs` centers evenly spaced over `[min, max]` (endpoints
/// included), every width set to the input's standard deviation, and all
/// consequents zero.
pub fn init_model(stats: &[FeatureStats], mfs: usize) -> Result<TskModel> {
    let grid = RuleGrid::new(stats.len(), mfs)?;
    let mut model = TskModel::zeros(grid);
    for (m, s) in stats.iter().enumerate() {
        if !(s.max > s.min) || !(s.std > 0.0) {
            return Err(Error::ConstantFeature {
                input: m,
                value: s.min,
            });
        }
        for i in 0..mfs {
            let center = if mfs == 1 {
                0.5 * (s.min + s.max)
            } else {
                s.min + (s.max - s.min) * i as f64 / (mfs - 1) as f64
            };
            *model.mf_mut(m, i) = GaussianMf::new(center, s.std);
        }
    }
    Ok(model)
}
