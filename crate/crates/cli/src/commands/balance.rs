//! Divergence-balanced development/evaluation split of a labeled dataset.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, ensure, Context, Result};
use asc_core::{
    aggregate_windows, derive_seed, derived_rng, generate_candidates, make_eval_split,
    score_candidate_divergence, select_balanced_split, truth_with_subsets, write_truth_csv,
    AggregatedPoint, ClassPool, Dataset, GmmConfig, RecordingGroup,
};
use clap::Args;

use crate::config::ConfigArgs;
use crate::pipeline;

#[derive(Args, Debug)]
pub struct BalanceArgs {
    /// Manifest CSV of labeled segments to split.
    #[arg(long)]
    pub manifest: PathBuf,

    /// Output directory for split.csv, candidates.csv, and truth.csv.
    #[arg(long)]
    pub out: PathBuf,

    #[command(flatten)]
    pub config: ConfigArgs,
}

/// Group a dataset's segments into per-class recording pools, classes in
/// vocabulary order, recordings and segments sorted by id.
pub fn class_pools(dataset: &Dataset) -> Vec<ClassPool> {
    let mut by_class: BTreeMap<&str, BTreeMap<&str, Vec<String>>> = BTreeMap::new();
    for segment in dataset.segments() {
        if let Some(label) = segment.label.as_deref() {
            by_class
                .entry(label)
                .or_default()
                .entry(&segment.recording_id)
                .or_default()
                .push(segment.segment_id.clone());
        }
    }
    dataset
        .label_vocabulary()
        .iter()
        .map(|label| ClassPool {
            class_label: label.clone(),
            recordings: by_class
                .get(label.as_str())
                .into_iter()
                .flatten()
                .map(|(recording_id, segment_ids)| {
                    let mut segment_ids = segment_ids.clone();
                    segment_ids.sort();
                    RecordingGroup {
                        recording_id: recording_id.to_string(),
                        segment_ids,
                    }
                })
                .collect(),
        })
        .collect()
}

pub fn run(args: &BalanceArgs) -> Result<()> {
    let config = args.config.resolve()?;
    if config.dev_target == 0 || config.eval_target == 0 {
        bail!("balance needs dev_target and eval_target set to positive segment counts");
    }
    let loaded = pipeline::load_features(&args.manifest)?;
    ensure!(
        loaded.dataset.fully_labeled(),
        "split balancing needs a fully labeled manifest"
    );

    let mut points_of_segment: BTreeMap<String, Vec<AggregatedPoint>> = BTreeMap::new();
    for (segment, matrix) in loaded.dataset.segments().iter().zip(&loaded.matrices) {
        let points = aggregate_windows(matrix, config.window, config.hop)
            .with_context(|| format!("aggregating segment {}", segment.segment_id))?;
        points_of_segment.insert(segment.segment_id.clone(), points);
    }

    let pools = class_pools(&loaded.dataset);
    let mut rng = derived_rng(config.seed, "balance");
    let candidates = generate_candidates(
        &pools,
        config.dev_target,
        config.eval_target,
        config.candidates,
        &mut rng,
    )?;

    let gmm_base_seed = derive_seed(config.seed, "balance-gmm");
    let scorer = |candidate: &asc_core::SplitCandidate, index: usize| {
        score_candidate_divergence(
            candidate,
            &points_of_segment,
            config.components,
            &GmmConfig {
                seed: gmm_base_seed.wrapping_add(index as u64),
                ..GmmConfig::default()
            },
        )
    };
    let split = select_balanced_split(&candidates, scorer, &mut rng)?;

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    write_split(&args.out.join("split.csv"), &split.selected)?;
    write_candidates(
        &args.out.join("candidates.csv"),
        &split.scores,
        split.selected_index,
    )?;

    let eval_ids: std::collections::BTreeSet<&str> =
        split.selected.evaluation_segments().collect();
    let eval_segments: Vec<_> = loaded
        .dataset
        .segments()
        .iter()
        .filter(|s| eval_ids.contains(s.segment_id.as_str()))
        .cloned()
        .collect();
    let eval_dataset = Dataset::from_segments(eval_segments)?;
    let eval_split = make_eval_split(
        &eval_dataset,
        config.eval_ratio,
        derive_seed(config.seed, "eval-split"),
    )?;
    let truth = truth_with_subsets(&eval_dataset, &eval_split)?;
    write_truth_csv(&args.out.join("truth.csv"), &truth)?;
    config.write_resolved(&args.out)?;

    let score = split.selected.score.unwrap_or(f64::NAN);
    println!(
        "selected candidate {} of {}, divergence {:.6}",
        split.selected_index,
        split.scores.len(),
        score
    );
    println!(
        "development {} segments, evaluation {} segments ({} public, {} private)",
        split.selected.development_segments().count(),
        split.selected.evaluation_segments().count(),
        eval_split.public_ids().len(),
        eval_split.private_ids().len()
    );
    Ok(())
}

fn write_split(path: &std::path::Path, candidate: &asc_core::SplitCandidate) -> Result<()> {
    let mut rows: Vec<(String, &str)> = candidate
        .development_segments()
        .map(|id| (id.to_string(), "development"))
        .chain(
            candidate
                .evaluation_segments()
                .map(|id| (id.to_string(), "evaluation")),
        )
        .collect();
    rows.sort();
    let mut writer =
        csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    writer.write_record(["segment_id", "set"])?;
    for (id, set) in rows {
        writer.write_record([id.as_str(), set])?;
    }
    writer.flush()?;
    Ok(())
}

fn write_candidates(path: &std::path::Path, scores: &[f64], selected: usize) -> Result<()> {
    let mut out = String::from("candidate,score,selected\n");
    for (index, score) in scores.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{}\n",
            index,
            score,
            if index == selected { "true" } else { "false" }
        ));
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
