//! Grouped K-fold ensembles and prediction fusion.
//!
//! Folds are exclusive by group: all segments sharing a location (or
//! recording) land in the same fold, so validation always measures
//! generalization to unseen places. K models are trained, each holding one
//! fold out, and their predictions are fused by majority vote or by
//! averaging confidences.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{predict_batch, ClassifierModel, Trainer};
use crate::rng::{derived_rng, Prng};

/// Which segment field identifies the exclusive grouping unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupKey {
    LocationId,
    RecordingId,
}

impl GroupKey {
    fn of<'a>(&self, segment: &'a crate::data::Segment) -> &'a str {
        match self {
            GroupKey::LocationId => &segment.location_id,
            GroupKey::RecordingId => &segment.recording_id,
        }
    }
}

/// A partition of group identifiers into K folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    k: usize,
    fold_of_group: BTreeMap<String, usize>,
}

impl FoldAssignment {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn fold_of(&self, group: &str) -> Option<usize> {
        self.fold_of_group.get(group).copied()
    }

    /// All (group, fold) pairs in sorted group order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, usize)> {
        self.fold_of_group.iter().map(|(g, &f)| (g.as_str(), f))
    }

    pub fn groups_in_fold(&self, fold: usize) -> Vec<&str> {
        self.fold_of_group
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(g, _)| g.as_str())
            .collect()
    }
}

/// Shuffle the distinct groups (seeded) and deal them round-robin onto K
/// folds, so every fold gets at least one group.
pub fn make_folds(
    dataset: &Dataset,
    k: usize,
    group_key: GroupKey,
    rng: &mut Prng,
) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::invalid(format!("fold count must be at least 2, got {k}")));
    }
    let mut groups: Vec<&str> = dataset
        .segments()
        .iter()
        .map(|s| group_key.of(s))
        .collect();
    groups.sort_unstable();
    groups.dedup();
    if groups.len() < k {
        return Err(Error::InsufficientGroups {
            requested: k,
            available: groups.len(),
        });
    }
    groups.shuffle(rng);
    let fold_of_group = groups
        .iter()
        .enumerate()
        .map(|(i, g)| (g.to_string(), i % k))
        .collect();
    Ok(FoldAssignment { k, fold_of_group })
}

/// Output of [`train_kfold`]: the per-fold models (fold order), the pooled
/// out-of-fold accuracy, and the fold assignment used.
#[derive(Debug)]
pub struct KfoldOutcome {
    pub models: Vec<ClassifierModel>,
    pub oof_accuracy: f64,
    pub assignment: FoldAssignment,
}

/// Train one model per fold on all other folds' segments. `features` and
/// `targets` run parallel to `dataset.segments()`; targets are soft label
/// vectors. Out-of-fold accuracy counts each segment under the one model
/// that never saw it.
pub fn train_kfold(
    dataset: &Dataset,
    features: &[Vec<f64>],
    targets: &[Vec<f64>],
    k: usize,
    trainer: &dyn Trainer,
    group_key: GroupKey,
    rng: &mut Prng,
) -> Result<KfoldOutcome> {
    if features.len() != dataset.len() || targets.len() != dataset.len() {
        return Err(Error::shape(format!(
            "dataset has {} segments but {} feature rows and {} target rows were supplied",
            dataset.len(),
            features.len(),
            targets.len()
        )));
    }
    if !dataset.fully_labeled() {
        return Err(Error::invalid("k-fold training requires a fully labeled dataset"));
    }
    let assignment = make_folds(dataset, k, group_key, rng)?;
    let fold_of_segment: Vec<usize> = dataset
        .segments()
        .iter()
        .map(|s| assignment.fold_of(group_key.of(s)).expect("group was assigned"))
        .collect();

    let root: u64 = rng.random();
    let mut models = Vec::with_capacity(k);
    let mut correct = 0usize;
    for fold in 0..k {
        let train_data: Vec<(Vec<f64>, Vec<f64>)> = (0..dataset.len())
            .filter(|&i| fold_of_segment[i] != fold)
            .map(|i| (features[i].clone(), targets[i].clone()))
            .collect();
        let mut fold_rng = derived_rng(root, &format!("fold{fold}"));
        let model = trainer
            .fit(&train_data, &mut fold_rng)
            .map_err(|e| Error::Fold {
                fold,
                source: Box::new(e),
            })?;
        let held_out: Vec<usize> = (0..dataset.len())
            .filter(|&i| fold_of_segment[i] == fold)
            .collect();
        let held_features: Vec<Vec<f64>> = held_out.iter().map(|&i| features[i].clone()).collect();
        let probs = predict_batch(&model, &held_features).map_err(|e| Error::Fold {
            fold,
            source: Box::new(e),
        })?;
        for (&i, p) in held_out.iter().zip(&probs) {
            let predicted = p.argmax();
            let truth = targets[i]
                .iter()
                .position(|&t| t == 1.0)
                .expect("labeled targets are one-hot");
            if predicted == truth {
                correct += 1;
            }
        }
        models.push(model);
    }
    Ok(KfoldOutcome {
        models,
        oof_accuracy: correct as f64 / dataset.len() as f64,
        assignment,
    })
}

/// Majority vote over M models' label predictions. Ties go to the class
/// with the highest summed confidence among the tied classes when
/// `confidences` is given, otherwise to the lowest class index.
pub fn fuse_majority(
    predictions: &[Vec<usize>],
    confidences: Option<&[Vec<Vec<f64>>]>,
) -> Result<Vec<usize>> {
    let m = predictions.len();
    if m == 0 {
        return Err(Error::invalid("majority fusion needs at least one model"));
    }
    let n = predictions[0].len();
    for (i, row) in predictions.iter().enumerate() {
        if row.len() != n {
            return Err(Error::shape(format!(
                "model {i} predicts {} samples, model 0 predicts {n}",
                row.len()
            )));
        }
    }
    if let Some(conf) = confidences {
        if conf.len() != m {
            return Err(Error::shape(format!(
                "{m} label sets but {} confidence sets",
                conf.len()
            )));
        }
        for (i, rows) in conf.iter().enumerate() {
            if rows.len() != n {
                return Err(Error::shape(format!(
                    "confidence set {i} covers {} samples, expected {n}",
                    rows.len()
                )));
            }
        }
    }
    let mut fused = Vec::with_capacity(n);
    for s in 0..n {
        let mut votes: BTreeMap<usize, usize> = BTreeMap::new();
        for row in predictions {
            *votes.entry(row[s]).or_insert(0) += 1;
        }
        let top = votes.values().max().copied().unwrap_or(0);
        let tied: Vec<usize> = votes
            .iter()
            .filter(|(_, &v)| v == top)
            .map(|(&c, _)| c)
            .collect();
        let winner = if tied.len() == 1 {
            tied[0]
        } else if let Some(conf) = confidences {
            let summed = |class: usize| -> f64 {
                conf.iter().map(|rows| rows[s].get(class).copied().unwrap_or(0.0)).sum()
            };
            // BTreeMap iteration gives ascending class order, so strict
            // comparison keeps the lowest index on equal sums.
            let mut best = tied[0];
            for &c in &tied[1..] {
                if summed(c) > summed(best) {
                    best = c;
                }
            }
            best
        } else {
            tied[0]
        };
        fused.push(winner);
    }
    Ok(fused)
}

/// Average M models' probability sets and take the per-sample argmax (ties
/// to the lowest class index). Returns labels and the fused probabilities.
pub fn fuse_average(prob_sets: &[Vec<Vec<f64>>]) -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
    let m = prob_sets.len();
    if m == 0 {
        return Err(Error::invalid("average fusion needs at least one model"));
    }
    let n = prob_sets[0].len();
    if n == 0 {
        return Err(Error::invalid("average fusion needs at least one sample"));
    }
    let c = prob_sets[0][0].len();
    for (i, rows) in prob_sets.iter().enumerate() {
        if rows.len() != n {
            return Err(Error::shape(format!(
                "probability set {i} covers {} samples, set 0 covers {n}",
                rows.len()
            )));
        }
        for (s, row) in rows.iter().enumerate() {
            if row.len() != c {
                return Err(Error::shape(format!(
                    "set {i} sample {s} has {} classes, expected {c}",
                    row.len()
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 || row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::invalid(format!(
                    "set {i} sample {s} is not a probability distribution (sum {sum})"
                )));
            }
        }
    }
    let mut fused = vec![vec![0.0; c]; n];
    for rows in prob_sets {
        for (s, row) in rows.iter().enumerate() {
            for (cls, &p) in row.iter().enumerate() {
                fused[s][cls] += p;
            }
        }
    }
    let scale = 1.0 / m as f64;
    let mut labels = Vec::with_capacity(n);
    for row in fused.iter_mut() {
        for p in row.iter_mut() {
            *p *= scale;
        }
        let mut best = 0;
        for (cls, &p) in row.iter().enumerate().skip(1) {
            if p > row[best] {
                best = cls;
            }
        }
        labels.push(best);
    }
    Ok((labels, fused))
}
