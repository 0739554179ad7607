//! Fuse several models' probability files into one prediction set.

use std::path::PathBuf;

use anyhow::{ensure, Context, Result};
use asc_core::{fuse_average, fuse_majority, write_probability_csv, write_submission_csv};
use clap::{Args, ValueEnum};

use crate::pipeline;

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum FuseMethod {
    /// Mean of the probability rows, argmax of the mean.
    Average,
    /// Majority vote over per-model argmax labels, confidence tie-break.
    Majority,
}

#[derive(Args, Debug)]
pub struct FuseArgs {
    /// Probability CSVs, one per model, over the same segments and classes.
    #[arg(long = "probs", value_name = "FILE", required = true, num_args = 1..)]
    pub probs: Vec<PathBuf>,

    #[arg(long, value_enum, default_value_t = FuseMethod::Average)]
    pub method: FuseMethod,

    /// Output directory for the fused files.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &FuseArgs) -> Result<()> {
    let mut ids: Option<Vec<String>> = None;
    let mut classes: Option<Vec<String>> = None;
    let mut prob_sets: Vec<Vec<Vec<f64>>> = Vec::with_capacity(args.probs.len());
    for path in &args.probs {
        let (file_classes, rows) = asc_core::read_probability_csv(path)?;
        let file_ids: Vec<String> = rows.iter().map(|(id, _)| id.clone()).collect();
        match (&classes, &ids) {
            (None, None) => {
                classes = Some(file_classes);
                ids = Some(file_ids);
            }
            (Some(c), Some(i)) => {
                ensure!(
                    *c == file_classes,
                    "{} lists different classes than the first file",
                    path.display()
                );
                ensure!(
                    *i == file_ids,
                    "{} lists different segments than the first file",
                    path.display()
                );
            }
            _ => unreachable!("classes and ids are set together"),
        }
        prob_sets.push(rows.into_iter().map(|(_, probs)| probs).collect());
    }
    let ids = ids.expect("at least one file is required");
    let classes = classes.expect("at least one file is required");
    ensure!(!ids.is_empty(), "probability files contain no segments");

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let winners = match args.method {
        FuseMethod::Average => {
            let (winners, fused) = fuse_average(&prob_sets)?;
            let fused_rows: Vec<(String, Vec<f64>)> =
                ids.iter().cloned().zip(fused).collect();
            write_probability_csv(&args.out.join("probabilities.csv"), &classes, &fused_rows)?;
            winners
        }
        FuseMethod::Majority => {
            let votes: Vec<Vec<usize>> = prob_sets
                .iter()
                .map(|rows| rows.iter().map(|r| pipeline::argmax(r)).collect())
                .collect();
            fuse_majority(&votes, Some(&prob_sets))?
        }
    };
    let predictions = ids
        .iter()
        .zip(&winners)
        .map(|(id, &w)| (id.clone(), classes[w].clone()))
        .collect();
    write_submission_csv(&args.out.join("predictions.csv"), &predictions)?;
    println!("fused {} segments from {} models", ids.len(), args.probs.len());
    Ok(())
}
