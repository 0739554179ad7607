//! Manifest-to-feature plumbing shared by the pipeline subcommands.
//!
//! All subcommands funnel through the same steps: load the manifest and its
//! feature matrices, standardize per frequency bin, optionally erase during
//! training, reduce with the configured preprocessing variant, flatten, and
//! optionally append one mixup pass. Keeping the order in one place makes
//! `train`, `kfold`, `ssl`, and `ablation` runs comparable.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{ensure, Context, Result};
use asc_core::{
    apply_standardizer, background_subtract, derived_rng, fit_standardizer, fuse_average,
    load_manifest, mixup_batch, one_hot, random_erase, read_feature_matrix, read_model,
    read_standardizer, temporal_average, write_model, write_standardizer, ClassifierModel,
    Dataset, FeatureMatrix, MixupConfig, StandardizerStats,
};

use crate::config::{RunConfig, Variant};

/// A manifest together with every feature matrix it references, in segment
/// order. Feature paths resolve relative to the manifest's directory.
pub struct LoadedDataset {
    pub dataset: Dataset,
    pub matrices: Vec<FeatureMatrix>,
}

pub fn load_features(manifest: &Path) -> Result<LoadedDataset> {
    let dataset = load_manifest(manifest)
        .with_context(|| format!("loading manifest {}", manifest.display()))?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let matrices = dataset
        .segments()
        .iter()
        .map(|segment| {
            read_feature_matrix(&base.join(&segment.feature_ref))
                .with_context(|| format!("feature file for segment {}", segment.segment_id))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LoadedDataset { dataset, matrices })
}

/// Reduce one standardized matrix to a classifier input row.
pub fn variant_features(matrix: &FeatureMatrix, variant: Variant) -> Vec<f64> {
    match variant {
        Variant::Raw => matrix.to_flat_vec(),
        Variant::TemporalAverage => temporal_average(matrix),
        Variant::BackgroundSubtract => background_subtract(matrix).to_flat_vec(),
    }
}

/// Fit a standardizer on the given matrices and produce one training row per
/// matrix: standardize, erase with the configured probability (when enabled),
/// then apply the variant. The erasing stream is derived from the root seed,
/// so toggling other stages leaves it unchanged.
pub fn prepare_training_features(
    matrices: &[FeatureMatrix],
    config: &RunConfig,
) -> Result<(StandardizerStats, Vec<Vec<f64>>)> {
    let stats = fit_standardizer(matrices)?;
    let erase_config = config.erase_config();
    let mut erase_rng = derived_rng(config.seed, "erase");
    let mut rows = Vec::with_capacity(matrices.len());
    for matrix in matrices {
        let standardized = apply_standardizer(&stats, matrix)?;
        let augmented = if config.erase {
            random_erase(&standardized, &erase_config, &mut erase_rng)
        } else {
            standardized
        };
        rows.push(variant_features(&augmented, config.variant));
    }
    Ok((stats, rows))
}

/// Produce prediction rows with a stored standardizer: standardize and apply
/// the variant, with no augmentation.
pub fn prepare_eval_features(
    matrices: &[FeatureMatrix],
    stats: &StandardizerStats,
    variant: Variant,
) -> Result<Vec<Vec<f64>>> {
    matrices
        .iter()
        .map(|matrix| Ok(variant_features(&apply_standardizer(stats, matrix)?, variant)))
        .collect()
}

/// One-hot targets for a fully labeled dataset, in segment order.
pub fn one_hot_targets(dataset: &Dataset) -> Result<Vec<Vec<f64>>> {
    dataset
        .segments()
        .iter()
        .map(|segment| {
            let label = segment
                .label
                .as_deref()
                .with_context(|| format!("segment {} is unlabeled", segment.segment_id))?;
            let index = dataset
                .class_index(label)
                .with_context(|| format!("label {label} is not in the vocabulary"))?;
            Ok(one_hot(index, dataset.class_count())?.into_vec())
        })
        .collect()
}

/// Append one mixed copy of the training pairs when mixup is enabled. The
/// mixing stream is derived from the root seed independently of every other
/// stage.
pub fn with_mixup(
    pairs: Vec<(Vec<f64>, Vec<f64>)>,
    config: &RunConfig,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    if !config.mixup || pairs.len() < 2 {
        return Ok(pairs);
    }
    let mixup_config = MixupConfig::new(config.mixup_alpha, config.seed)?;
    let mut rng = derived_rng(config.seed, "mixup");
    let mixed = mixup_batch(&pairs, &mixup_config, &mut rng)?;
    let mut out = pairs;
    out.extend(mixed.into_iter().map(|m| (m.features, m.target)));
    Ok(out)
}

/// Everything a full training pass produces.
pub struct FittedPipeline {
    pub model: ClassifierModel,
    pub stats: StandardizerStats,
    /// Mean per-sample loss of each epoch.
    pub history: Vec<f64>,
    /// Training pair count after augmentation.
    pub train_rows: usize,
}

/// The whole training pipeline on one loaded dataset: standardize, erase,
/// reduce, mix, initialize, and fit. All randomness fans out from
/// `config.seed` with one named stream per stage.
pub fn fit_pipeline(loaded: &LoadedDataset, config: &RunConfig) -> Result<FittedPipeline> {
    ensure!(!loaded.dataset.is_empty(), "training manifest is empty");
    ensure!(
        loaded.dataset.fully_labeled(),
        "training manifest has unlabeled segments"
    );
    let (stats, rows) = prepare_training_features(&loaded.matrices, config)?;
    let targets = one_hot_targets(&loaded.dataset)?;
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = rows.into_iter().zip(targets).collect();
    let pairs = with_mixup(pairs, config)?;
    let input_dim = pairs[0].0.len();

    let mut rng = asc_core::derived_rng(config.seed, "train");
    let model = ClassifierModel::new(
        config.architecture()?,
        input_dim,
        loaded.dataset.class_count(),
        &mut rng,
    )?;
    let (model, history) = asc_core::train(model, &pairs, &config.train_config(), &mut rng)?;
    Ok(FittedPipeline {
        model,
        stats,
        history,
        train_rows: pairs.len(),
    })
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Per-segment probability rows in segment order. With several models the
/// rows are the average of the per-model probabilities.
pub fn probability_rows(
    models: &[ClassifierModel],
    ids: &[String],
    rows: &[Vec<f64>],
) -> Result<Vec<(String, Vec<f64>)>> {
    ensure!(ids.len() == rows.len(), "id and feature row counts differ");
    ensure!(!models.is_empty(), "prediction needs at least one model");
    let mut prob_sets = Vec::with_capacity(models.len());
    for model in models {
        let probs = rows
            .iter()
            .map(|row| Ok(model.forward(row)?.into_vec()))
            .collect::<Result<Vec<_>>>()?;
        prob_sets.push(probs);
    }
    let fused = if prob_sets.len() == 1 {
        prob_sets.pop().expect("one probability set")
    } else {
        fuse_average(&prob_sets)?.1
    };
    Ok(ids.iter().cloned().zip(fused).collect())
}

/// Turn probability rows into a submission map via per-row argmax.
pub fn predictions_from_rows(
    vocabulary: &[String],
    rows: &[(String, Vec<f64>)],
) -> Result<BTreeMap<String, String>> {
    let mut predictions = BTreeMap::new();
    for (id, probs) in rows {
        ensure!(
            probs.len() == vocabulary.len(),
            "segment {id} has {} probabilities for {} classes",
            probs.len(),
            vocabulary.len()
        );
        predictions.insert(id.clone(), vocabulary[argmax(probs)].clone());
    }
    Ok(predictions)
}

/// Artifacts read back from a model directory: one model from `train` or
/// `ssl` output, one per fold from `kfold` output.
pub struct ModelArtifacts {
    pub models: Vec<ClassifierModel>,
    pub stats: StandardizerStats,
    pub vocabulary: Vec<String>,
    pub config: RunConfig,
}

/// Write the standard model directory layout: `model.ascm`,
/// `standardizer.csv`, `labels.txt`, and `resolved.cfg`.
pub fn write_model_dir(
    dir: &Path,
    model: &ClassifierModel,
    stats: &StandardizerStats,
    vocabulary: &[String],
    config: &RunConfig,
) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_model(model, &dir.join("model.ascm"))?;
    write_standardizer(stats, &dir.join("standardizer.csv"))?;
    let mut labels = vocabulary.join("\n");
    labels.push('\n');
    std::fs::write(dir.join("labels.txt"), labels)
        .with_context(|| format!("writing labels under {}", dir.display()))?;
    config.write_resolved(dir)?;
    Ok(())
}

pub fn read_model_dir(dir: &Path) -> Result<ModelArtifacts> {
    let single = dir.join("model.ascm");
    let models = if single.exists() {
        vec![read_model(&single)?]
    } else {
        let mut folds = Vec::new();
        loop {
            let path = dir.join(format!("model_fold{}.ascm", folds.len()));
            if !path.exists() {
                break;
            }
            folds.push(read_model(&path)?);
        }
        ensure!(
            !folds.is_empty(),
            "{} holds neither model.ascm nor model_fold0.ascm",
            dir.display()
        );
        folds
    };
    let stats = read_standardizer(&dir.join("standardizer.csv"))?;
    let labels_path = dir.join("labels.txt");
    let vocabulary: Vec<String> = std::fs::read_to_string(&labels_path)
        .with_context(|| format!("reading {}", labels_path.display()))?
        .lines()
        .map(str::to_string)
        .collect();
    for model in &models {
        ensure!(
            vocabulary.len() == model.class_count(),
            "{} lists {} labels but the model has {} classes",
            labels_path.display(),
            vocabulary.len(),
            model.class_count()
        );
    }
    let mut config = RunConfig::default();
    config.apply_file(&dir.join("resolved.cfg"))?;
    Ok(ModelArtifacts {
        models,
        stats,
        vocabulary,
        config,
    })
}
