//! Pseudo-label self-training.
//!
//! Each round trains on the labeled set, predicts the unlabeled pool,
//! adopts every prediction whose top confidence clears a threshold as a
//! hard one-hot label, and retrains from scratch on the union. Pseudo
//! labels are re-derived from the newest model every round rather than
//! accumulated, so an early mistake is never frozen in.

use rand::Rng;

use crate::data::one_hot;
use crate::error::{Error, Result};
use crate::model::{predict_batch, ClassifierModel, Trainer, TrainingPair};
use crate::rng::{derived_rng, Prng};

/// How the model is refreshed after pseudo-labels are added.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RetrainMode {
    #[default]
    FromScratch,
}

/// Settings for a pseudo-labeling run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SslConfig {
    /// Strict lower bound on the top class probability for acceptance.
    pub threshold: f64,
    /// Number of sequential label-and-retrain rounds.
    pub rounds: usize,
    pub retrain_mode: RetrainMode,
}

impl SslConfig {
    pub fn new(threshold: f64, rounds: usize) -> Result<Self> {
        let config = SslConfig {
            threshold,
            rounds,
            retrain_mode: RetrainMode::FromScratch,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.threshold.is_finite() || !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::invalid(format!(
                "confidence threshold must lie in [0, 1], got {}",
                self.threshold
            )));
        }
        if self.rounds == 0 {
            return Err(Error::invalid("pseudo-labeling needs at least one round"));
        }
        Ok(())
    }
}

impl Default for SslConfig {
    fn default() -> Self {
        SslConfig {
            threshold: 0.5,
            rounds: 1,
            retrain_mode: RetrainMode::FromScratch,
        }
    }
}

/// Result of [`pseudo_label_run`]: the final model and how many unlabeled
/// samples were adopted in each round.
#[derive(Debug)]
pub struct SslOutcome {
    pub model: ClassifierModel,
    pub accepted_per_round: Vec<usize>,
}

/// Indices of unlabeled samples whose top probability under `model`
/// strictly exceeds `threshold`, with the predicted class for each.
pub fn accepted_indices(
    model: &ClassifierModel,
    unlabeled: &[Vec<f64>],
    threshold: f64,
) -> Result<Vec<(usize, usize)>> {
    let probs = predict_batch(model, unlabeled)?;
    Ok(probs
        .iter()
        .enumerate()
        .filter(|(_, p)| p.max_value() > threshold)
        .map(|(i, p)| (i, p.argmax()))
        .collect())
}

fn run_rounds(
    trainer: &dyn Trainer,
    labeled: &[TrainingPair],
    unlabeled: &[Vec<f64>],
    config: &SslConfig,
    rng: &mut Prng,
) -> Result<(ClassifierModel, Vec<TrainingPair>, Vec<usize>)> {
    config.validate()?;
    if labeled.is_empty() {
        return Err(Error::invalid("pseudo-labeling needs a nonempty labeled set"));
    }
    let root: u64 = rng.random();
    let mut init_rng = derived_rng(root, "ssl-init");
    let mut model = trainer.fit(labeled, &mut init_rng)?;
    let class_count = model.class_count();

    let mut augmented: Vec<TrainingPair> = labeled.to_vec();
    let mut accepted_per_round = Vec::with_capacity(config.rounds);
    for round in 0..config.rounds {
        let accepted = accepted_indices(&model, unlabeled, config.threshold)?;
        augmented = labeled.to_vec();
        for &(i, class) in &accepted {
            augmented.push((unlabeled[i].clone(), one_hot(class, class_count)?.into_vec()));
        }
        accepted_per_round.push(accepted.len());
        // With nothing accepted the union equals the labeled set, so the
        // current model already is the retrained one.
        if !accepted.is_empty() {
            let mut round_rng = derived_rng(root, &format!("ssl-round{round}"));
            model = trainer.fit(&augmented, &mut round_rng)?;
        }
    }
    Ok((model, augmented, accepted_per_round))
}

/// One train / predict / adopt / retrain cycle. Returns the retrained
/// model, the labeled set with pseudo-labels appended, and how many
/// unlabeled samples were adopted.
pub fn pseudo_label_round(
    trainer: &dyn Trainer,
    labeled: &[TrainingPair],
    unlabeled: &[Vec<f64>],
    config: &SslConfig,
    rng: &mut Prng,
) -> Result<(ClassifierModel, Vec<TrainingPair>, usize)> {
    let single = SslConfig {
        rounds: 1,
        ..*config
    };
    let (model, augmented, counts) = run_rounds(trainer, labeled, unlabeled, &single, rng)?;
    Ok((model, augmented, counts[0]))
}

/// Run `config.rounds` sequential pseudo-labeling rounds. Every round
/// rebuilds the training set as the original labeled data plus freshly
/// thresholded pseudo-labels from the newest model.
pub fn pseudo_label_run(
    trainer: &dyn Trainer,
    labeled: &[TrainingPair],
    unlabeled: &[Vec<f64>],
    config: &SslConfig,
    rng: &mut Prng,
) -> Result<SslOutcome> {
    let (model, _, accepted_per_round) = run_rounds(trainer, labeled, unlabeled, config, rng)?;
    Ok(SslOutcome {
        model,
        accepted_per_round,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Architecture, SgdTrainer, TrainConfig};
    use crate::rng::derived_rng;

    fn two_blob_data(n_per_class: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
        use rand::Rng;
        let mut rng = derived_rng(seed, "blobs");
        let mut data = Vec::new();
        for class in 0..2usize {
            let center = if class == 0 { -2.0 } else { 2.0 };
            for _ in 0..n_per_class {
                let x = vec![
                    center + rng.random_range(-0.5..0.5),
                    center + rng.random_range(-0.5..0.5),
                ];
                data.push((x, one_hot(class, 2).unwrap().into_vec()));
            }
        }
        data
    }

    fn quick_trainer() -> SgdTrainer {
        SgdTrainer {
            arch: Architecture::Linear,
            input_dim: 2,
            class_count: 2,
            config: TrainConfig {
                epochs: 40,
                batch_size: 8,
                base_lr: 0.1,
                ..TrainConfig::default()
            },
        }
    }

    #[test]
    fn threshold_one_accepts_nothing() {
        let labeled = two_blob_data(10, 1);
        let unlabeled: Vec<Vec<f64>> = two_blob_data(5, 2).into_iter().map(|(x, _)| x).collect();
        let config = SslConfig::new(1.0, 1).unwrap();
        let trainer = quick_trainer();
        let mut rng = derived_rng(3, "ssl");
        let (_, augmented, accepted) =
            pseudo_label_round(&trainer, &labeled, &unlabeled, &config, &mut rng).unwrap();
        assert_eq!(accepted, 0);
        assert_eq!(augmented.len(), labeled.len());
    }

    #[test]
    fn threshold_zero_accepts_everything() {
        let labeled = two_blob_data(10, 4);
        let unlabeled: Vec<Vec<f64>> = two_blob_data(7, 5).into_iter().map(|(x, _)| x).collect();
        let config = SslConfig::new(0.0, 1).unwrap();
        let trainer = quick_trainer();
        let mut rng = derived_rng(6, "ssl");
        let (_, augmented, accepted) =
            pseudo_label_round(&trainer, &labeled, &unlabeled, &config, &mut rng).unwrap();
        assert_eq!(accepted, unlabeled.len());
        assert_eq!(augmented.len(), labeled.len() + unlabeled.len());
    }

    #[test]
    fn accepted_count_matches_direct_count() {
        let labeled = two_blob_data(12, 7);
        let unlabeled: Vec<Vec<f64>> = two_blob_data(9, 8).into_iter().map(|(x, _)| x).collect();
        let config = SslConfig::new(0.8, 1).unwrap();
        let trainer = quick_trainer();

        // Oracle: reproduce the initial fit, predict once, count directly.
        let mut oracle_rng = derived_rng(9, "ssl");
        let root: u64 = rand::Rng::random(&mut oracle_rng);
        let mut init_rng = derived_rng(root, "ssl-init");
        let initial = trainer.fit(&labeled, &mut init_rng).unwrap();
        let expected = accepted_indices(&initial, &unlabeled, 0.8).unwrap().len();

        let mut rng = derived_rng(9, "ssl");
        let (_, _, accepted) =
            pseudo_label_round(&trainer, &labeled, &unlabeled, &config, &mut rng).unwrap();
        assert_eq!(accepted, expected);
    }

    #[test]
    fn single_round_run_matches_pseudo_label_round() {
        let labeled = two_blob_data(10, 10);
        let unlabeled: Vec<Vec<f64>> = two_blob_data(6, 11).into_iter().map(|(x, _)| x).collect();
        let config = SslConfig::new(0.6, 1).unwrap();
        let trainer = quick_trainer();

        let mut rng_a = derived_rng(12, "ssl");
        let (model_a, _, accepted_a) =
            pseudo_label_round(&trainer, &labeled, &unlabeled, &config, &mut rng_a).unwrap();
        let mut rng_b = derived_rng(12, "ssl");
        let outcome = pseudo_label_run(&trainer, &labeled, &unlabeled, &config, &mut rng_b).unwrap();

        assert_eq!(outcome.accepted_per_round, vec![accepted_a]);
        assert_eq!(model_a.params(), outcome.model.params());
    }

    #[test]
    fn empty_unlabeled_pool_reduces_to_plain_training() {
        let labeled = two_blob_data(10, 13);
        let config = SslConfig::new(0.5, 3).unwrap();
        let trainer = quick_trainer();

        let mut rng = derived_rng(14, "ssl");
        let outcome = pseudo_label_run(&trainer, &labeled, &[], &config, &mut rng).unwrap();
        assert_eq!(outcome.accepted_per_round, vec![0, 0, 0]);

        let mut plain_rng = derived_rng(14, "ssl");
        let root: u64 = rand::Rng::random(&mut plain_rng);
        let mut init_rng = derived_rng(root, "ssl-init");
        let plain = trainer.fit(&labeled, &mut init_rng).unwrap();
        assert_eq!(outcome.model.params(), plain.params());
    }

    #[test]
    fn reruns_reproduce_accepted_counts() {
        let labeled = two_blob_data(10, 15);
        let unlabeled: Vec<Vec<f64>> = two_blob_data(8, 16).into_iter().map(|(x, _)| x).collect();
        let config = SslConfig::new(0.7, 3).unwrap();
        let trainer = quick_trainer();
        let run = || {
            let mut rng = derived_rng(17, "ssl");
            pseudo_label_run(&trainer, &labeled, &unlabeled, &config, &mut rng)
                .unwrap()
                .accepted_per_round
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn higher_threshold_never_accepts_more_for_a_fixed_model() {
        let labeled = two_blob_data(15, 18);
        let unlabeled: Vec<Vec<f64>> = two_blob_data(20, 19).into_iter().map(|(x, _)| x).collect();
        let trainer = quick_trainer();
        let mut rng = derived_rng(20, "fit");
        let model = trainer.fit(&labeled, &mut rng).unwrap();
        let mut last = usize::MAX;
        for threshold in [0.0, 0.2, 0.4, 0.5, 0.6, 0.8, 0.95, 1.0] {
            let count = accepted_indices(&model, &unlabeled, threshold).unwrap().len();
            assert!(count <= last, "count rose from {last} to {count} at {threshold}");
            last = count;
        }
    }

    #[test]
    fn augmented_set_size_adds_accepted_count() {
        let labeled = two_blob_data(10, 21);
        let unlabeled: Vec<Vec<f64>> = two_blob_data(6, 22).into_iter().map(|(x, _)| x).collect();
        let config = SslConfig::new(0.55, 1).unwrap();
        let trainer = quick_trainer();
        let mut rng = derived_rng(23, "ssl");
        let (_, augmented, accepted) =
            pseudo_label_round(&trainer, &labeled, &unlabeled, &config, &mut rng).unwrap();
        assert_eq!(augmented.len(), labeled.len() + accepted);
    }

    #[test]
    fn config_bounds_are_enforced() {
        assert!(SslConfig::new(-0.1, 1).is_err());
        assert!(SslConfig::new(1.1, 1).is_err());
        assert!(SslConfig::new(f64::NAN, 1).is_err());
        assert!(SslConfig::new(0.5, 0).is_err());
        assert!(SslConfig::new(0.0, 1).is_ok());
        assert!(SslConfig::new(1.0, 4).is_ok());
    }
}
