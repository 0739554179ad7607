//! Shared fixtures for the benchmark suite: deterministic synthetic
//! spectrograms, labeled training pairs, and aggregated cluster points.

use asc_core::{derived_rng, AggregatedPoint, FeatureMatrix};
use rand::Rng;

/// A dense matrix of uniform noise in [-1, 1).
pub fn feature_matrix(rows: usize, cols: usize, seed: u64) -> FeatureMatrix {
    let mut rng = derived_rng(seed, "bench-matrix");
    let values = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    FeatureMatrix::new(rows, cols, values).expect("positive dimensions")
}

/// Gaussian-blob training pairs: class c is centered at 2c on the dimensions
/// congruent to c, with one-hot targets. Classes cycle over the samples.
pub fn training_pairs(
    samples: usize,
    dim: usize,
    classes: usize,
    seed: u64,
) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut rng = derived_rng(seed, "bench-pairs");
    (0..samples)
        .map(|i| {
            let class = i % classes;
            let features = (0..dim)
                .map(|d| {
                    let center = if d % classes == class { 2.0 * class as f64 } else { 0.0 };
                    center + rng.random_range(-0.5..0.5)
                })
                .collect();
            let mut target = vec![0.0; classes];
            target[class] = 1.0;
            (features, target)
        })
        .collect()
}

/// Points drawn around `clusters` well-separated centers, cycling over the
/// samples.
pub fn aggregated_points(
    samples: usize,
    dim: usize,
    clusters: usize,
    seed: u64,
) -> Vec<AggregatedPoint> {
    let mut rng = derived_rng(seed, "bench-points");
    (0..samples)
        .map(|i| {
            let cluster = i % clusters;
            let values = (0..dim)
                .map(|_| 5.0 * cluster as f64 + rng.random_range(-0.5..0.5))
                .collect();
            AggregatedPoint { values }
        })
        .collect()
}
