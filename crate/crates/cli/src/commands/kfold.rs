//! Train a group-exclusive K-fold ensemble.

use std::path::PathBuf;

use anyhow::{ensure, Context, Result};
use asc_core::{
    derived_rng, mixup_batch, train, train_kfold, ClassifierModel, GroupKey, MixupConfig, Prng,
    Trainer, TrainingPair,
};
use clap::{Args, ValueEnum};

use crate::config::{ConfigArgs, RunConfig};
use crate::pipeline;

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum GroupArg {
    /// Segments from one location never straddle folds.
    Location,
    /// Segments from one recording never straddle folds.
    Recording,
}

impl GroupArg {
    fn key(self) -> GroupKey {
        match self {
            Self::Location => GroupKey::LocationId,
            Self::Recording => GroupKey::RecordingId,
        }
    }
}

#[derive(Args, Debug)]
pub struct KfoldArgs {
    /// Manifest CSV of labeled training segments.
    #[arg(long)]
    pub manifest: PathBuf,

    /// Output directory for the fold models and assignment.
    #[arg(long)]
    pub out: PathBuf,

    /// Grouping that folds must keep exclusive.
    #[arg(long, value_enum, default_value_t = GroupArg::Location)]
    pub group: GroupArg,

    #[command(flatten)]
    pub config: ConfigArgs,
}

/// The shared per-fold trainer: an optional mixup pass on the fold's training
/// pairs, then a fresh model fitted with SGD. All randomness comes from the
/// per-fold stream that `train_kfold` hands in.
pub fn fold_trainer(
    config: &RunConfig,
    input_dim: usize,
    class_count: usize,
) -> Result<impl Fn(&[TrainingPair], &mut Prng) -> asc_core::Result<ClassifierModel>> {
    let arch = config.architecture()?;
    let train_config = config.train_config();
    let mixup_config = MixupConfig::new(config.mixup_alpha, config.seed)?;
    let mixup_enabled = config.mixup;
    Ok(
        move |data: &[TrainingPair], rng: &mut Prng| -> asc_core::Result<ClassifierModel> {
            let mut data = data.to_vec();
            if mixup_enabled && data.len() >= 2 {
                let mixed = mixup_batch(&data, &mixup_config, rng)?;
                data.extend(mixed.into_iter().map(|m| (m.features, m.target)));
            }
            let model = ClassifierModel::new(arch, input_dim, class_count, rng)?;
            train(model, &data, &train_config, rng).map(|(m, _)| m)
        },
    )
}

pub fn run(args: &KfoldArgs) -> Result<()> {
    let config = args.config.resolve()?;
    let loaded = pipeline::load_features(&args.manifest)?;
    ensure!(!loaded.dataset.is_empty(), "training manifest is empty");
    ensure!(
        loaded.dataset.fully_labeled(),
        "training manifest has unlabeled segments"
    );
    let (stats, rows) = pipeline::prepare_training_features(&loaded.matrices, &config)?;
    let targets = pipeline::one_hot_targets(&loaded.dataset)?;
    let input_dim = rows[0].len();

    let trainer = fold_trainer(&config, input_dim, loaded.dataset.class_count())?;
    let mut rng = derived_rng(config.seed, "kfold");
    let outcome = train_kfold(
        &loaded.dataset,
        &rows,
        &targets,
        config.folds,
        &trainer as &dyn Trainer,
        args.group.key(),
        &mut rng,
    )?;

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    for (fold, model) in outcome.models.iter().enumerate() {
        asc_core::write_model(model, &args.out.join(format!("model_fold{fold}.ascm")))?;
    }
    asc_core::write_standardizer(&stats, &args.out.join("standardizer.csv"))?;
    let mut labels = loaded.dataset.label_vocabulary().join("\n");
    labels.push('\n');
    std::fs::write(args.out.join("labels.txt"), labels)
        .with_context(|| format!("writing labels under {}", args.out.display()))?;
    config.write_resolved(&args.out)?;
    write_folds(&args.out.join("folds.csv"), &outcome.assignment)?;
    println!("oof_accuracy,{:.4}", outcome.oof_accuracy);
    Ok(())
}

fn write_folds(path: &std::path::Path, assignment: &asc_core::FoldAssignment) -> Result<()> {
    let mut writer =
        csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    writer.write_record(["group", "fold"])?;
    for (group, fold) in assignment.entries() {
        writer.write_record([group, &fold.to_string()])?;
    }
    writer.flush()?;
    Ok(())
}
