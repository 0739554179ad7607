//! Predict class probabilities and labels with a trained model directory.

use std::path::PathBuf;

use anyhow::{ensure, Context, Result};
use asc_core::{write_probability_csv, write_submission_csv};
use clap::Args;

use crate::pipeline;

#[derive(Args, Debug)]
pub struct PredictArgs {
    /// Manifest CSV of segments to classify (labels may be empty).
    #[arg(long)]
    pub manifest: PathBuf,

    /// Directory written by `train`, `kfold`, or `ssl`.
    #[arg(long)]
    pub model_dir: PathBuf,

    /// Output directory for probabilities.csv and predictions.csv.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &PredictArgs) -> Result<()> {
    let artifacts = pipeline::read_model_dir(&args.model_dir)?;
    let loaded = pipeline::load_features(&args.manifest)?;
    ensure!(!loaded.dataset.is_empty(), "prediction manifest is empty");

    let rows = pipeline::prepare_eval_features(
        &loaded.matrices,
        &artifacts.stats,
        artifacts.config.variant,
    )?;
    let ids: Vec<String> = loaded
        .dataset
        .segments()
        .iter()
        .map(|s| s.segment_id.clone())
        .collect();
    let probability_rows = pipeline::probability_rows(&artifacts.models, &ids, &rows)?;
    let predictions = pipeline::predictions_from_rows(&artifacts.vocabulary, &probability_rows)?;

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    write_probability_csv(
        &args.out.join("probabilities.csv"),
        &artifacts.vocabulary,
        &probability_rows,
    )?;
    write_submission_csv(&args.out.join("predictions.csv"), &predictions)?;
    artifacts.config.write_resolved(&args.out)?;
    println!("predicted {} segments", ids.len());
    Ok(())
}
