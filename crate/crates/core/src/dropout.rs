//! Sampling of DropRule, DropMF and DropMembership masks.
//!
//! Every flag draws one uniform `p` in `[0, 1)` and is kept when `p <= keep_prob`.

use rand::Rng;

use crate::model::{DropMask, DropVariant, RuleGrid};

/// Extra attempts made when a rule mask drops every rule.
pub const MAX_RULE_MASK_RESAMPLES: usize = 16;

fn flags<R: Rng + ?Sized>(n: usize, keep_prob: f64, rng: &mut R) -> Vec<bool> {
    (0..n).map(|_| rng.random::<f64>() <= keep_prob).collect()
}

/// Keeps each rule with probability `keep_prob`.
///
/// A mask that drops all rules is redrawn up to [`MAX_RULE_MASK_RESAMPLES`]
/// times; if every redraw is also empty, all rules are kept.
pub fn sample_rule_mask<R: Rng + ?Sized>(rules: usize, keep_prob: f64, rng: &mut R) -> DropMask {
    for _ in 0..=MAX_RULE_MASK_RESAMPLES {
        let keep = flags(rules, keep_prob, rng);
        if keep.iter().any(|&k| k) {
            return DropMask::Rule(keep);
        }
    }
    DropMask::Rule(vec![true; rules])
}

/// Keeps each of the `inputs * mfs` MFs with probability `keep_prob`.
pub fn sample_mf_mask<R: Rng + ?Sized>(
    inputs: usize,
    mfs: usize,
    keep_prob: f64,
    rng: &mut R,
) -> DropMask {
    DropMask::Mf(flags(inputs * mfs, keep_prob, rng))
}

/// Keeps each `(rule, input)` membership slot with probability `keep_prob`.
pub fn sample_membership_mask<R: Rng + ?Sized>(
    rules: usize,
    inputs: usize,
    keep_prob: f64,
    rng: &mut R,
) -> DropMask {
    DropMask::Membership(flags(rules * inputs, keep_prob, rng))
}

/// Draws one mask of the requested variant for `grid`. `None` draws nothing.
pub fn sample_mask<R: Rng + ?Sized>(
    variant: DropVariant,
    grid: &RuleGrid,
    keep_prob: f64,
    rng: &mut R,
) -> DropMask {
    match variant {
        DropVariant::None => DropMask::None,
        DropVariant::Rule => sample_rule_mask(grid.rules(), keep_prob, rng),
        DropVariant::Mf => sample_mf_mask(grid.inputs(), grid.mfs_per_input(), keep_prob, rng),
        DropVariant::Membership => {
            sample_membership_mask(grid.rules(), grid.inputs(), keep_prob, rng)
        }
    }
}
