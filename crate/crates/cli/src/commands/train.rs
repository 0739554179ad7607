//! Train one classifier on a labeled manifest.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;

use crate::config::ConfigArgs;
use crate::pipeline;

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Manifest CSV of labeled training segments.
    #[arg(long)]
    pub manifest: PathBuf,

    /// Output directory for the model artifacts.
    #[arg(long)]
    pub out: PathBuf,

    #[command(flatten)]
    pub config: ConfigArgs,
}

pub fn run(args: &TrainArgs) -> Result<()> {
    let config = args.config.resolve()?;
    let loaded = pipeline::load_features(&args.manifest)?;
    let fitted = pipeline::fit_pipeline(&loaded, &config)?;

    pipeline::write_model_dir(
        &args.out,
        &fitted.model,
        &fitted.stats,
        loaded.dataset.label_vocabulary(),
        &config,
    )?;
    write_history(&args.out.join("history.csv"), &fitted.history)?;
    println!(
        "trained {} segments ({} after augmentation), final loss {:.6}",
        loaded.dataset.len(),
        fitted.train_rows,
        fitted.history.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

/// Per-epoch mean losses as `epoch,loss` rows.
pub fn write_history(path: &std::path::Path, history: &[f64]) -> Result<()> {
    let mut out = String::from("epoch,loss\n");
    for (epoch, loss) in history.iter().enumerate() {
        out.push_str(&format!("{},{}\n", epoch + 1, loss));
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
