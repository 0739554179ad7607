//! Benchmarks for the hot paths: forward passes, SGD training, the two
//! augmentations, EM fitting, and divergence scoring.

use std::hint::black_box;

use asc_bench::{aggregated_points, feature_matrix, training_pairs};
use asc_core::{
    derived_rng, empirical_symmetric_kl, gmm_fit, mixup_batch, random_erase, Architecture,
    ClassifierModel, EraseConfig, GmmConfig, MixupConfig, SgdTrainer, TrainConfig, Trainer,
};
use criterion::{criterion_group, criterion_main, Criterion};

fn bench_forward(c: &mut Criterion) {
    let mut rng = derived_rng(1, "bench-forward");
    let model = ClassifierModel::new(Architecture::Mlp { hidden_units: 64 }, 40, 10, &mut rng)
        .expect("valid dims");
    let pairs = training_pairs(1, 40, 10, 1);
    let x = &pairs[0].0;
    c.bench_function("forward_mlp64_40d", |b| {
        b.iter(|| model.forward(black_box(x)).expect("finite input"))
    });
}

fn bench_train(c: &mut Criterion) {
    let pairs = training_pairs(200, 40, 5, 2);
    let trainer = SgdTrainer {
        arch: Architecture::Linear,
        input_dim: 40,
        class_count: 5,
        config: TrainConfig {
            epochs: 5,
            batch_size: 32,
            ..TrainConfig::default()
        },
    };
    c.bench_function("train_linear_200x40_5ep", |b| {
        b.iter(|| {
            let mut rng = derived_rng(2, "bench-train");
            trainer.fit(black_box(&pairs), &mut rng).expect("training converges")
        })
    });
}

fn bench_mixup(c: &mut Criterion) {
    let pairs = training_pairs(256, 40, 5, 3);
    let config = MixupConfig::new(0.2, 0).expect("valid alpha");
    c.bench_function("mixup_batch_256x40", |b| {
        b.iter(|| {
            let mut rng = derived_rng(3, "bench-mixup");
            mixup_batch(black_box(&pairs), &config, &mut rng).expect("matched dims")
        })
    });
}

fn bench_erase(c: &mut Criterion) {
    let matrix = feature_matrix(40, 501, 4);
    let config = EraseConfig {
        probability: 1.0,
        area_low: 0.02,
        area_high: 0.33,
        aspect_low: 0.3,
        aspect_high: 3.3,
        fill_value: 0.0,
        seed: 0,
    };
    c.bench_function("random_erase_40x501", |b| {
        b.iter(|| {
            let mut rng = derived_rng(4, "bench-erase");
            random_erase(black_box(&matrix), &config, &mut rng)
        })
    });
}

fn bench_gmm(c: &mut Criterion) {
    let points = aggregated_points(300, 8, 2, 5);
    let config = GmmConfig::default();
    c.bench_function("gmm_fit_300x8_k2", |b| {
        b.iter(|| gmm_fit(black_box(&points), 2, &config).expect("separated clusters"))
    });
}

fn bench_symmetric_kl(c: &mut Criterion) {
    let points_a = aggregated_points(500, 8, 2, 6);
    let points_b = aggregated_points(500, 8, 2, 7);
    let config = GmmConfig::default();
    let fit_a = gmm_fit(&points_a, 2, &config).expect("separated clusters");
    let fit_b = gmm_fit(&points_b, 2, &config).expect("separated clusters");
    c.bench_function("symmetric_kl_500v500", |b| {
        b.iter(|| {
            empirical_symmetric_kl(
                black_box(&fit_a.model),
                black_box(&points_a),
                black_box(&fit_b.model),
                black_box(&points_b),
            )
            .expect("matched dims")
        })
    });
}

criterion_group!(
    benches,
    bench_forward,
    bench_train,
    bench_mixup,
    bench_erase,
    bench_gmm,
    bench_symmetric_kl
);
criterion_main!(benches);
