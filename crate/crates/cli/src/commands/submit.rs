//! Submit to a journaled public/private leaderboard.

use std::path::PathBuf;

use anyhow::{Context, Result};
use chrono::{DateTime, Utc};
use clap::Args;

use asc_core::{read_journal, read_submission_csv, read_truth_csv, write_journal, Leaderboard};

#[derive(Args, Debug)]
pub struct SubmitArgs {
    /// Submission CSV with segment_id,scene_label rows.
    #[arg(long)]
    pub submission: PathBuf,

    /// Truth CSV with segment_id,scene_label,subset rows.
    #[arg(long)]
    pub truth: PathBuf,

    /// Journal CSV holding the submission history; created if missing.
    #[arg(long)]
    pub journal: PathBuf,

    /// Team name the submission is recorded under.
    #[arg(long)]
    pub team: String,

    /// Accepted submissions allowed per team per UTC day.
    #[arg(long, default_value_t = 2)]
    pub limit: usize,

    /// Submission timestamp as RFC 3339; defaults to the current time.
    #[arg(long)]
    pub timestamp: Option<String>,

    /// Print the final private-score ranking after this submission.
    #[arg(long)]
    pub finalize: bool,
}

pub fn run(args: &SubmitArgs) -> Result<()> {
    let truth = read_truth_csv(&args.truth)?;
    let history = if args.journal.exists() {
        read_journal(&args.journal)?
    } else {
        Vec::new()
    };
    let mut board = Leaderboard::with_history(truth, args.limit, history)?;

    let timestamp: DateTime<Utc> = match &args.timestamp {
        Some(text) => DateTime::parse_from_rfc3339(text)
            .with_context(|| format!("bad --timestamp {text}"))?
            .with_timezone(&Utc),
        None => Utc::now(),
    };
    let predictions = read_submission_csv(&args.submission)?;

    let result = board.submit(&args.team, timestamp, &predictions);
    // Rejected attempts are journaled too, so the journal is rewritten
    // before the error propagates.
    write_journal(&args.journal, board.records())?;
    let receipt = result?;
    println!("public_score,{:.4}", receipt.public_score);
    if args.finalize {
        for (team, private_score) in board.final_ranking() {
            println!("final,{team},{private_score:.4}");
        }
    }
    Ok(())
}
