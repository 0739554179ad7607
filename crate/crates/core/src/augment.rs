//! Training-time sample synthesis: mixup pair interpolation and random
//! erasing of spectrogram rectangles.
//!
//! Mixup draws λ from Beta(α, α) and forms convex combinations of two
//! samples and their targets, so the model trains on interpolated points
//! with soft labels. Random erasing blanks one axis-aligned rectangle of
//! the feature matrix at a random size and position.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::rng::Prng;

/// Mixup settings: Beta shape parameter and the stream seed the CLI uses to
/// derive an independent PRNG for this stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixupConfig {
    pub alpha: f64,
    pub seed: u64,
}

impl MixupConfig {
    pub fn new(alpha: f64, seed: u64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::invalid(format!("mixup alpha must be positive, got {alpha}")));
        }
        Ok(Self { alpha, seed })
    }
}

impl Default for MixupConfig {
    fn default() -> Self {
        Self { alpha: 0.2, seed: 0 }
    }
}

/// Random-erasing settings. `area_low`/`area_high` bound the rectangle area
/// as a fraction of all cells; `aspect_low`/`aspect_high` bound its
/// height/width ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EraseConfig {
    pub probability: f64,
    pub area_low: f64,
    pub area_high: f64,
    pub aspect_low: f64,
    pub aspect_high: f64,
    pub fill_value: f64,
    pub seed: u64,
}

impl EraseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(Error::invalid(format!(
                "erase probability must be in [0,1], got {}",
                self.probability
            )));
        }
        if !(self.area_low > 0.0 && self.area_low <= self.area_high && self.area_high <= 1.0) {
            return Err(Error::invalid(format!(
                "erase area bounds must satisfy 0 < low <= high <= 1, got [{}, {}]",
                self.area_low, self.area_high
            )));
        }
        if !(self.aspect_low > 0.0 && self.aspect_low <= self.aspect_high) {
            return Err(Error::invalid(format!(
                "erase aspect bounds must satisfy 0 < low <= high, got [{}, {}]",
                self.aspect_low, self.aspect_high
            )));
        }
        Ok(())
    }
}

impl Default for EraseConfig {
    fn default() -> Self {
        Self {
            probability: 0.5,
            area_low: 0.02,
            area_high: 0.33,
            aspect_low: 0.3,
            aspect_high: 3.3,
            fill_value: 0.0,
            seed: 0,
        }
    }
}

/// A mixed training sample: interpolated features plus a soft target.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedSample {
    pub features: Vec<f64>,
    pub target: Vec<f64>,
}

/// Draw the mixing weight λ from Beta(α, α).
pub fn sample_lambda(config: &MixupConfig, rng: &mut Prng) -> f64 {
    let beta = Beta::new(config.alpha, config.alpha).expect("validated alpha");
    beta.sample(rng)
}

/// Interpolate two samples: features λ·x_i + (1−λ)·x_j, targets likewise.
pub fn mixup(
    x_i: &[f64],
    y_i: &[f64],
    x_j: &[f64],
    y_j: &[f64],
    lambda: f64,
) -> Result<MixedSample> {
    if x_i.len() != x_j.len() {
        return Err(Error::shape(format!(
            "mixup feature dimensions differ: {} vs {}",
            x_i.len(),
            x_j.len()
        )));
    }
    if y_i.len() != y_j.len() {
        return Err(Error::shape(format!(
            "mixup target dimensions differ: {} vs {}",
            y_i.len(),
            y_j.len()
        )));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid(format!("lambda must be in [0,1], got {lambda}")));
    }
    let mix = |a: &[f64], b: &[f64]| -> Vec<f64> {
        a.iter()
            .zip(b)
            .map(|(&ai, &bi)| lambda * ai + (1.0 - lambda) * bi)
            .collect()
    };
    Ok(MixedSample {
        features: mix(x_i, x_j),
        target: mix(y_i, y_j),
    })
}

/// Mix a whole batch: element k is paired with element perm(k) under one
/// uniformly random permutation (fixed points allowed); a fresh λ is drawn
/// per pair. The permutation is drawn first, then the λ values in pair order.
pub fn mixup_batch(
    batch: &[(Vec<f64>, Vec<f64>)],
    config: &MixupConfig,
    rng: &mut Prng,
) -> Result<Vec<MixedSample>> {
    if batch.len() < 2 {
        return Err(Error::invalid(format!(
            "mixup batch needs at least 2 samples, got {}",
            batch.len()
        )));
    }
    let mut perm: Vec<usize> = (0..batch.len()).collect();
    perm.shuffle(rng);
    batch
        .iter()
        .zip(&perm)
        .map(|((x_i, y_i), &j)| {
            let lambda = sample_lambda(config, rng);
            mixup(x_i, y_i, &batch[j].0, &batch[j].1, lambda)
        })
        .collect()
}

const ERASE_ATTEMPTS: usize = 100;

/// With probability `config.probability`, overwrite one random rectangle
/// with the fill value; otherwise return the input unchanged. Rectangle
/// dimensions are resampled until they fit the matrix and land within the
/// configured area range (rounding slack one quarter below `area_low`);
/// after 100 failed attempts the last rectangle is clipped to fit.
pub fn random_erase(m: &FeatureMatrix, config: &EraseConfig, rng: &mut Prng) -> FeatureMatrix {
    let gate: f64 = rng.random();
    if gate >= config.probability {
        return m.clone();
    }
    let rows = m.rows();
    let cols = m.cols();
    let total = (rows * cols) as f64;
    let mut height = 1usize;
    let mut width = 1usize;
    let mut found = false;
    for _ in 0..ERASE_ATTEMPTS {
        let area = rng.random_range(config.area_low..=config.area_high) * total;
        let aspect = rng.random_range(config.aspect_low..=config.aspect_high);
        let h = (area * aspect).sqrt().round() as usize;
        let w = (area / aspect).sqrt().round() as usize;
        let cells = (h * w) as f64;
        if h >= 1
            && w >= 1
            && h <= rows
            && w <= cols
            && cells >= config.area_low * total * 0.75
            && cells <= config.area_high * total
        {
            height = h;
            width = w;
            found = true;
            break;
        }
        height = h;
        width = w;
    }
    if !found {
        height = height.clamp(1, rows);
        width = width.clamp(1, cols);
    }
    let top = rng.random_range(0..=rows - height);
    let left = rng.random_range(0..=cols - width);
    let mut values = m.values().to_vec();
    for r in top..top + height {
        for c in left..left + width {
            values[r * cols + c] = config.fill_value;
        }
    }
    FeatureMatrix::from_vec_unchecked(rows, cols, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derived_rng;
    use approx::assert_abs_diff_eq;

    #[test]
    fn beta_one_matches_uniform_mean() {
        let config = MixupConfig::new(1.0, 0).unwrap();
        let mut rng = derived_rng(7, "lambda");
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| sample_lambda(&config, &mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn lambda_stays_in_unit_interval() {
        for alpha in [0.1, 0.2, 1.0, 5.0] {
            let config = MixupConfig::new(alpha, 0).unwrap();
            let mut rng = derived_rng(11, "lambda");
            for _ in 0..2_000 {
                let l = sample_lambda(&config, &mut rng);
                assert!((0.0..=1.0).contains(&l));
            }
        }
    }

    #[test]
    fn lambda_draws_are_deterministic() {
        let config = MixupConfig::default();
        let mut a = derived_rng(3, "lambda");
        let mut b = derived_rng(3, "lambda");
        for _ in 0..50 {
            assert_eq!(sample_lambda(&config, &mut a), sample_lambda(&config, &mut b));
        }
    }

    #[test]
    fn mixup_endpoints_are_exact() {
        let (x_i, y_i) = (vec![0.3, -1.2, 4.0], vec![1.0, 0.0]);
        let (x_j, y_j) = (vec![2.0, 0.5, -3.0], vec![0.0, 1.0]);
        let at_one = mixup(&x_i, &y_i, &x_j, &y_j, 1.0).unwrap();
        assert_eq!(at_one.features, x_i);
        assert_eq!(at_one.target, y_i);
        let at_zero = mixup(&x_i, &y_i, &x_j, &y_j, 0.0).unwrap();
        assert_eq!(at_zero.features, x_j);
        assert_eq!(at_zero.target, y_j);
    }

    #[test]
    fn mixup_halfway_worked_example() {
        let out = mixup(&[2.0, 0.0], &[1.0, 0.0], &[0.0, 2.0], &[0.0, 1.0], 0.5).unwrap();
        assert_eq!(out.features, vec![1.0, 1.0]);
        assert_eq!(out.target, vec![0.5, 0.5]);
    }

    #[test]
    fn mixup_is_symmetric_in_pair_and_lambda() {
        let (x_i, y_i) = (vec![0.25, 9.5], vec![0.0, 1.0]);
        let (x_j, y_j) = (vec![-4.0, 1.5], vec![1.0, 0.0]);
        for lambda in [0.0, 0.3, 0.5, 0.77, 1.0] {
            let a = mixup(&x_i, &y_i, &x_j, &y_j, lambda).unwrap();
            let b = mixup(&x_j, &y_j, &x_i, &y_i, 1.0 - lambda).unwrap();
            for (u, v) in a.features.iter().zip(&b.features) {
                assert_abs_diff_eq!(u, v, epsilon = 1e-9);
            }
            for (u, v) in a.target.iter().zip(&b.target) {
                assert_abs_diff_eq!(u, v, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn mixup_rejects_mismatched_shapes() {
        assert!(mixup(&[1.0], &[1.0], &[1.0, 2.0], &[1.0], 0.5).is_err());
        assert!(mixup(&[1.0], &[1.0, 0.0], &[1.0], &[1.0], 0.5).is_err());
        assert!(mixup(&[1.0], &[1.0], &[1.0], &[1.0], 1.5).is_err());
    }

    #[test]
    fn batch_of_identical_samples_is_fixed_point() {
        let sample = (vec![1.0, 2.0, 3.0], vec![0.0, 1.0]);
        let batch = vec![sample.clone(); 5];
        let mut rng = derived_rng(5, "mixup");
        let out = mixup_batch(&batch, &MixupConfig::default(), &mut rng).unwrap();
        assert_eq!(out.len(), 5);
        for s in out {
            for (a, b) in s.features.iter().zip(&sample.0) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
            for (a, b) in s.target.iter().zip(&sample.1) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn batch_targets_stay_on_simplex() {
        let batch = vec![
            (vec![1.0, 0.0], vec![1.0, 0.0, 0.0]),
            (vec![0.0, 1.0], vec![0.0, 1.0, 0.0]),
            (vec![1.0, 1.0], vec![0.0, 0.0, 1.0]),
            (vec![2.0, 2.0], vec![1.0, 0.0, 0.0]),
        ];
        let mut rng = derived_rng(9, "mixup");
        let out = mixup_batch(&batch, &MixupConfig::default(), &mut rng).unwrap();
        for s in &out {
            let sum: f64 = s.target.iter().sum();
            assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-9);
            assert!(s.target.iter().all(|&t| (0.0..=1.0).contains(&t)));
            let nonzero = s.target.iter().filter(|&&t| t != 0.0).count();
            assert!(nonzero <= 2);
        }
    }

    #[test]
    fn batch_output_stays_in_bounding_box() {
        let batch = vec![
            (vec![-3.0, 5.0], vec![1.0, 0.0]),
            (vec![2.0, -1.0], vec![0.0, 1.0]),
            (vec![0.5, 0.5], vec![1.0, 0.0]),
        ];
        let mut rng = derived_rng(13, "mixup");
        let out = mixup_batch(&batch, &MixupConfig::default(), &mut rng).unwrap();
        let lo: Vec<f64> = (0..2)
            .map(|d| batch.iter().map(|(x, _)| x[d]).fold(f64::INFINITY, f64::min))
            .collect();
        let hi: Vec<f64> = (0..2)
            .map(|d| batch.iter().map(|(x, _)| x[d]).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        for s in out {
            for (d, v) in s.features.iter().enumerate() {
                assert!(*v >= lo[d] - 1e-12 && *v <= hi[d] + 1e-12);
            }
        }
    }

    #[test]
    fn batch_of_one_is_rejected() {
        let mut rng = derived_rng(1, "mixup");
        let batch = vec![(vec![1.0], vec![1.0])];
        assert!(mixup_batch(&batch, &MixupConfig::default(), &mut rng).is_err());
    }

    fn counting_matrix(rows: usize, cols: usize) -> FeatureMatrix {
        let values = (0..rows * cols).map(|i| i as f64 + 1.0).collect();
        FeatureMatrix::new(rows, cols, values).unwrap()
    }

    #[test]
    fn zero_probability_never_erases() {
        let m = counting_matrix(8, 12);
        let config = EraseConfig {
            probability: 0.0,
            ..EraseConfig::default()
        };
        let mut rng = derived_rng(2, "erase");
        for _ in 0..100 {
            assert_eq!(random_erase(&m, &config, &mut rng), m);
        }
    }

    #[test]
    fn full_cover_config_blanks_everything() {
        let m = counting_matrix(6, 9);
        let aspect = 6.0 / 9.0;
        let config = EraseConfig {
            probability: 1.0,
            area_low: 1.0,
            area_high: 1.0,
            aspect_low: aspect,
            aspect_high: aspect,
            fill_value: -7.5,
            ..EraseConfig::default()
        };
        let mut rng = derived_rng(4, "erase");
        let out = random_erase(&m, &config, &mut rng);
        assert!(out.values().iter().all(|&v| v == -7.5));
    }

    #[test]
    fn cells_outside_rectangle_are_untouched() {
        let m = counting_matrix(10, 15);
        let config = EraseConfig {
            probability: 1.0,
            fill_value: 0.0,
            ..EraseConfig::default()
        };
        let mut rng = derived_rng(6, "erase");
        for _ in 0..200 {
            let out = random_erase(&m, &config, &mut rng);
            let mut rows_hit = Vec::new();
            let mut cols_hit = Vec::new();
            for r in 0..10 {
                for c in 0..15 {
                    if out.get(r, c) != m.get(r, c) {
                        assert_eq!(out.get(r, c), 0.0);
                        rows_hit.push(r);
                        cols_hit.push(c);
                    }
                }
            }
            assert!(!rows_hit.is_empty(), "probability 1 must erase");
            let (r0, r1) = (rows_hit.iter().min().unwrap(), rows_hit.iter().max().unwrap());
            let (c0, c1) = (cols_hit.iter().min().unwrap(), cols_hit.iter().max().unwrap());
            let rect = (r1 - r0 + 1) * (c1 - c0 + 1);
            assert_eq!(rect, rows_hit.len(), "changed cells must form one solid rectangle");
        }
    }

    #[test]
    fn erased_fraction_respects_area_bounds() {
        let m = counting_matrix(20, 30);
        let config = EraseConfig {
            probability: 1.0,
            ..EraseConfig::default()
        };
        let total = 600.0;
        let mut rng = derived_rng(8, "erase");
        for _ in 0..1_000 {
            let out = random_erase(&m, &config, &mut rng);
            let erased = out.values().iter().filter(|&&v| v == 0.0).count() as f64;
            let fraction = erased / total;
            assert!(fraction <= config.area_high + 1e-12, "fraction {fraction}");
            assert!(
                fraction >= config.area_low * 0.75 - 1e-12,
                "fraction {fraction}"
            );
        }
    }

    #[test]
    fn erase_is_deterministic_per_seed() {
        let m = counting_matrix(12, 12);
        let config = EraseConfig {
            probability: 0.5,
            ..EraseConfig::default()
        };
        let mut a = derived_rng(10, "erase");
        let mut b = derived_rng(10, "erase");
        for _ in 0..50 {
            assert_eq!(random_erase(&m, &config, &mut a), random_erase(&m, &config, &mut b));
        }
    }

    #[test]
    fn config_validation_catches_bad_bounds() {
        assert!(MixupConfig::new(0.0, 0).is_err());
        assert!(MixupConfig::new(-1.0, 0).is_err());
        let bad_area = EraseConfig {
            area_low: 0.5,
            area_high: 0.2,
            ..EraseConfig::default()
        };
        assert!(bad_area.validate().is_err());
        let bad_aspect = EraseConfig {
            aspect_low: 0.0,
            ..EraseConfig::default()
        };
        assert!(bad_aspect.validate().is_err());
        assert!(EraseConfig::default().validate().is_ok());
    }
}
