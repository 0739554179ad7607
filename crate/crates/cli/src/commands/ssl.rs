//! Pseudo-label self-training on a partially labeled manifest.

use std::path::PathBuf;

use anyhow::{ensure, Context, Result};
use asc_core::{derived_rng, pseudo_label_run, SgdTrainer, SslConfig};
use clap::Args;

use crate::config::ConfigArgs;
use crate::pipeline;

#[derive(Args, Debug)]
pub struct SslArgs {
    /// Manifest CSV mixing labeled and unlabeled segments (empty label =
    /// unlabeled).
    #[arg(long)]
    pub manifest: PathBuf,

    /// Output directory for the model artifacts and round report.
    #[arg(long)]
    pub out: PathBuf,

    #[command(flatten)]
    pub config: ConfigArgs,
}

pub fn run(args: &SslArgs) -> Result<()> {
    let config = args.config.resolve()?;
    let loaded = pipeline::load_features(&args.manifest)?;

    let labeled_indices: Vec<usize> = loaded
        .dataset
        .segments()
        .iter()
        .enumerate()
        .filter(|(_, s)| s.label.is_some())
        .map(|(i, _)| i)
        .collect();
    let unlabeled_indices: Vec<usize> = loaded
        .dataset
        .segments()
        .iter()
        .enumerate()
        .filter(|(_, s)| s.label.is_none())
        .map(|(i, _)| i)
        .collect();
    ensure!(
        !labeled_indices.is_empty(),
        "self-training needs at least one labeled segment"
    );

    // The standardizer and the erasing pass see only the labeled matrices;
    // unlabeled segments always get clean preprocessing.
    let labeled_matrices: Vec<_> = labeled_indices
        .iter()
        .map(|&i| loaded.matrices[i].clone())
        .collect();
    let (stats, labeled_rows) = pipeline::prepare_training_features(&labeled_matrices, &config)?;
    let unlabeled_matrices: Vec<_> = unlabeled_indices
        .iter()
        .map(|&i| loaded.matrices[i].clone())
        .collect();
    let unlabeled_rows =
        pipeline::prepare_eval_features(&unlabeled_matrices, &stats, config.variant)?;

    let class_count = loaded.dataset.class_count();
    let mut labeled_pairs = Vec::with_capacity(labeled_rows.len());
    for (&segment_index, row) in labeled_indices.iter().zip(labeled_rows) {
        let segment = &loaded.dataset.segments()[segment_index];
        let label = segment.label.as_deref().expect("filtered to labeled");
        let class = loaded
            .dataset
            .class_index(label)
            .with_context(|| format!("label {label} is not in the vocabulary"))?;
        labeled_pairs.push((row, asc_core::one_hot(class, class_count)?.into_vec()));
    }
    let labeled_pairs = pipeline::with_mixup(labeled_pairs, &config)?;
    let input_dim = labeled_pairs[0].0.len();

    let trainer = SgdTrainer {
        arch: config.architecture()?,
        input_dim,
        class_count,
        config: config.train_config(),
    };
    let ssl_config = SslConfig::new(config.ssl_threshold, config.ssl_rounds)?;
    let mut rng = derived_rng(config.seed, "ssl");
    let outcome = pseudo_label_run(&trainer, &labeled_pairs, &unlabeled_rows, &ssl_config, &mut rng)?;

    pipeline::write_model_dir(
        &args.out,
        &outcome.model,
        &stats,
        loaded.dataset.label_vocabulary(),
        &config,
    )?;
    write_rounds(
        &args.out.join("rounds.csv"),
        &outcome.accepted_per_round,
        unlabeled_rows.len(),
        config.ssl_threshold,
    )?;
    for (round, accepted) in outcome.accepted_per_round.iter().enumerate() {
        println!(
            "round {}: accepted {} of {} unlabeled segments",
            round + 1,
            accepted,
            unlabeled_rows.len()
        );
    }
    Ok(())
}

fn write_rounds(
    path: &std::path::Path,
    accepted_per_round: &[usize],
    total_unlabeled: usize,
    threshold: f64,
) -> Result<()> {
    let mut out = String::from("round,accepted,total_unlabeled,threshold\n");
    for (round, accepted) in accepted_per_round.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            round + 1,
            accepted,
            total_unlabeled,
            threshold
        ));
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
