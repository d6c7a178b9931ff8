use std::time::Duration;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tsk_core::dropout::sample_mask;
use tsk_core::grad::loss_and_gradients;
use tsk_core::model::init_model;
use tsk_core::optim::{adabound_step, AdaBoundHyper, MomentState};
use tsk_core::trainer::{train, TrainConfig};
use tsk_core::{DropMask, DropVariant};
use tsk_bench::prepared_synthetic;

fn gradients(c: &mut Criterion) {
    let (train_set, _) = prepared_synthetic(1500, 1);
    let model = init_model(&train_set.feature_stats(), 2).unwrap();
    let rows: Vec<&[f64]> = train_set.rows().take(64).collect();
    let targets = &train_set.targets()[..64];
    let mut g = c.benchmark_group("gradients");
    g.bench_function("batch64_no_mask", |b| {
        let masks = vec![DropMask::None; 64];
        b.iter(|| loss_and_gradients(&model, &rows, targets, 0.05, &masks).unwrap());
    });
    g.bench_function("batch64_droprule", |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        b.iter_batched(
            || {
                (0..64)
                    .map(|_| sample_mask(DropVariant::Rule, model.grid(), 0.5, &mut rng))
                    .collect::<Vec<_>>()
            },
            |masks| loss_and_gradients(&model, &rows, targets, 0.05, &masks).unwrap(),
            BatchSize::SmallInput,
        );
    });
    g.finish();
}

fn adabound(c: &mut Criterion) {
    let hyper = AdaBoundHyper::default();
    let grad: Vec<f64> = (0..212).map(|i| (i as f64 * 0.1).sin()).collect();
    c.bench_function("adabound_step_212", |b| {
        let mut state = MomentState::new(212);
        let mut theta = vec![0.0; 212];
        b.iter(|| {
            let (l, u) = hyper.bounds(state.k + 1);
            adabound_step(&mut state, &mut theta, &grad, &hyper, l, u).unwrap()
        });
    });
}

fn full_run(c: &mut Criterion) {
    let (train_set, test_set) = prepared_synthetic(1500, 2);
    let cfg = TrainConfig { iters: 100, ..TrainConfig::default() };
    c.bench_function("mbgd_rda_100_iters", |b| {
        b.iter(|| train(&cfg, &train_set, &test_set).unwrap());
    });
}

criterion_group!(
    name = group;
    config = Criterion::default()
        .warm_up_time(Duration::from_millis(500))
        .measurement_time(Duration::from_secs(3))
        .sample_size(10);
    targets = gradients, adabound, full_run
);

criterion_main!(group);
