//! Takagi-Sugeno-Kang fuzzy regression trained by mini-batch gradient descent.
//!
//! The full training recipe combines three ingredients on top of plain
//! mini-batch gradient descent:
//!
//! * l2 regularization of the rule consequents (biases excluded),
//! * DropRule, which randomly zeroes rule firing levels per training example
//!   (with DropMF and DropMembership as alternatives),
//! * AdaBound, Adam with per-coordinate rates clipped into bounds that shrink
//!   towards a final constant rate.
//!
//! Ridge regression, plain mini-batch gradient descent with Jang's adaptive rate
//! and Adam are provided as baselines, together with the preprocessing pipeline
//! and a repeated-split experiment runner.
//!
//! ```
//! use tsk_core::{data, trainer::{train, TrainConfig}};
//! use rand::SeedableRng;
//!
//! let raw = data::synthetic_sine(300, 1);
//! let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
//! let (train_raw, test_raw) = data::split(&raw, data::TRAIN_RATIO, &mut rng).unwrap();
//! let pre = data::fit_preprocessor(&train_raw, data::MAX_INPUT_DIMS).unwrap();
//! let train_set = data::apply_preprocessor(&pre, &train_raw).unwrap();
//! let test_set = data::apply_preprocessor(&pre, &test_raw).unwrap();
//!
//! let cfg = TrainConfig { iters: 50, ..TrainConfig::default() };
//! let (model, history) = train(&cfg, &train_set, &test_set).unwrap();
//! assert_eq!(history.len(), 50);
//! let _ = model.predict(test_set.row(0));
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod data;
pub mod dropout;
pub mod error;
pub mod experiment;
pub mod grad;
pub mod model;
pub mod optim;
pub mod suite;
pub mod trainer;

pub use data::{Dataset, Preprocessor, TrainSet};
pub use error::{Error, Result};
pub use grad::GradientVector;
pub use model::{DropMask, DropVariant, FeatureStats, GaussianMf, RuleGrid, TskModel, SIGMA_MIN};
pub use optim::{AdaBoundHyper, JangLrState, LrScheme, MomentState};
pub use suite::AlgorithmKind;
pub use trainer::{TrainConfig, TrainHistory};
