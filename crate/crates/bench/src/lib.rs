//! Shared fixtures for the criterion benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tsk_core::data::{apply_preprocessor, fit_preprocessor, split, synthetic_sine, MAX_INPUT_DIMS, TRAIN_RATIO};
use tsk_core::Dataset;

/// Preprocessed train/test halves of the synthetic benchmark problem.
pub fn prepared_synthetic(rows: usize, seed: u64) -> (Dataset, Dataset) {
    let raw = synthetic_sine(rows, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (train, test) = split(&raw, TRAIN_RATIO, &mut rng).expect("synthetic data splits");
    let pre = fit_preprocessor(&train, MAX_INPUT_DIMS).expect("synthetic inputs vary");
    (
        apply_preprocessor(&pre, &train).expect("schema matches"),
        apply_preprocessor(&pre, &test).expect("schema matches"),
    )
}
