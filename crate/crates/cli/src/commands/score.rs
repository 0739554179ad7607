//! Score a submission against a truth table over all of its segments.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use anyhow::Result;
use asc_core::{read_submission_csv, read_truth_csv, score_submission};
use clap::Args;

#[derive(Args, Debug)]
pub struct ScoreArgs {
    /// Submission CSV with segment_id,scene_label rows.
    #[arg(long)]
    pub submission: PathBuf,

    /// Truth CSV with segment_id,scene_label,subset rows.
    #[arg(long)]
    pub truth: PathBuf,
}

pub fn run(args: &ScoreArgs) -> Result<()> {
    let predictions = read_submission_csv(&args.submission)?;
    let truth = read_truth_csv(&args.truth)?;
    let labels: BTreeMap<String, String> = truth
        .iter()
        .map(|(id, (label, _))| (id.clone(), label.clone()))
        .collect();
    let all_ids: BTreeSet<String> = labels.keys().cloned().collect();
    let accuracy = score_submission(&predictions, &labels, &all_ids)?;
    println!("accuracy,{accuracy:.4}");
    Ok(())
}
