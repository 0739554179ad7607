//! Competition scoring harness.
//!
//! The evaluation set is cut into public and private halves by a
//! stratified seeded split. Teams submit label predictions; each
//! submission is scored on both halves, but only the public score is
//! returned until the competition is finalized. A per-day submission
//! limit is enforced on UTC calendar days, and every attempt is recorded
//! in an append-only journal that reconstructs the leaderboard exactly.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{DateTime, Days, SecondsFormat, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::Prng;

/// Which leaderboard half a segment belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Subset {
    Public,
    Private,
}

impl Subset {
    pub fn as_str(&self) -> &'static str {
        match self {
            Subset::Public => "public",
            Subset::Private => "private",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "public" => Ok(Subset::Public),
            "private" => Ok(Subset::Private),
            other => Err(Error::invalid(format!(
                "subset must be public or private, got {other}"
            ))),
        }
    }
}

/// Disjoint public/private segment-id sets covering the evaluation set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvaluationSplit {
    public_ids: BTreeSet<String>,
    private_ids: BTreeSet<String>,
    seed: u64,
}

impl EvaluationSplit {
    pub fn public_ids(&self) -> &BTreeSet<String> {
        &self.public_ids
    }

    pub fn private_ids(&self) -> &BTreeSet<String> {
        &self.private_ids
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn subset_of(&self, segment_id: &str) -> Option<Subset> {
        if self.public_ids.contains(segment_id) {
            Some(Subset::Public)
        } else if self.private_ids.contains(segment_id) {
            Some(Subset::Private)
        } else {
            None
        }
    }
}

/// Split a labeled evaluation dataset into public and private halves,
/// stratified by class. Per-class public quotas are the largest-remainder
/// apportionment of round(ratio · N) total public ids.
pub fn make_eval_split(dataset: &Dataset, ratio: f64, seed: u64) -> Result<EvaluationSplit> {
    if !ratio.is_finite() || ratio <= 0.0 || ratio >= 1.0 {
        return Err(Error::invalid(format!(
            "public ratio must lie strictly between 0 and 1, got {ratio}"
        )));
    }
    if !dataset.fully_labeled() {
        return Err(Error::invalid(
            "evaluation split needs ground-truth labels on every segment",
        ));
    }
    if dataset.is_empty() {
        return Err(Error::invalid("evaluation split needs at least one segment"));
    }

    let classes = dataset.label_vocabulary();
    let mut ids_of_class: Vec<Vec<&str>> = vec![Vec::new(); classes.len()];
    for seg in dataset.segments() {
        let label = seg.label.as_deref().expect("fully labeled");
        let class = dataset.class_index(label).expect("label in vocabulary");
        ids_of_class[class].push(&seg.segment_id);
    }

    let total = dataset.len();
    let public_total = (ratio * total as f64).round() as usize;
    let floors: Vec<usize> = ids_of_class
        .iter()
        .map(|ids| (ratio * ids.len() as f64).floor() as usize)
        .collect();
    let mut quotas = floors.clone();
    let assigned: usize = floors.iter().sum();
    let mut order: Vec<usize> = (0..classes.len()).collect();
    order.sort_by(|&a, &b| {
        let rem_a = ratio * ids_of_class[a].len() as f64 - floors[a] as f64;
        let rem_b = ratio * ids_of_class[b].len() as f64 - floors[b] as f64;
        rem_b.partial_cmp(&rem_a).expect("finite remainders").then(a.cmp(&b))
    });
    let mut leftover = public_total.saturating_sub(assigned);
    for &class in &order {
        if leftover == 0 {
            break;
        }
        if quotas[class] < ids_of_class[class].len() {
            quotas[class] += 1;
            leftover -= 1;
        }
    }

    let mut rng = Prng::seed_from_u64(seed);
    let mut public_ids = BTreeSet::new();
    let mut private_ids = BTreeSet::new();
    for (class, mut ids) in ids_of_class.into_iter().enumerate() {
        ids.shuffle(&mut rng);
        for (i, id) in ids.into_iter().enumerate() {
            if i < quotas[class] {
                public_ids.insert(id.to_string());
            } else {
                private_ids.insert(id.to_string());
            }
        }
    }
    Ok(EvaluationSplit {
        public_ids,
        private_ids,
        seed,
    })
}

/// Accuracy of `predictions` over the ids in `subset`, judged against
/// `truth`.
pub fn score_submission(
    predictions: &BTreeMap<String, String>,
    truth: &BTreeMap<String, String>,
    subset: &BTreeSet<String>,
) -> Result<f64> {
    if subset.is_empty() {
        return Err(Error::invalid("cannot score an empty id subset"));
    }
    let missing: Vec<String> = subset
        .iter()
        .filter(|id| !predictions.contains_key(*id))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingIds {
            count: missing.len(),
            sample: missing.into_iter().take(10).collect(),
        });
    }
    let known_labels: BTreeSet<&str> = truth.values().map(String::as_str).collect();
    let mut correct = 0usize;
    for id in subset {
        let actual = truth
            .get(id)
            .ok_or_else(|| Error::invalid(format!("subset id {id} is not in the truth table")))?;
        let predicted = &predictions[id];
        if !known_labels.contains(predicted.as_str()) {
            return Err(Error::UnknownLabel {
                segment_id: id.clone(),
                label: predicted.clone(),
            });
        }
        if predicted == actual {
            correct += 1;
        }
    }
    Ok(correct as f64 / subset.len() as f64)
}

/// One journal row: an accepted submission carries both scores, a
/// rejected attempt carries neither.
#[derive(Debug, Clone, PartialEq)]
pub struct SubmissionRecord {
    pub team: String,
    pub timestamp: DateTime<Utc>,
    pub public_score: Option<f64>,
    pub private_score: Option<f64>,
    pub accepted: bool,
}

/// What a team gets back for an accepted submission. The private score is
/// deliberately not part of this type.
#[derive(Debug, Clone, PartialEq)]
pub struct SubmissionReceipt {
    pub team: String,
    pub timestamp: DateTime<Utc>,
    pub public_score: f64,
}

/// Leaderboard state: the hidden truth with subset tags, the per-day
/// submission limit, and the journal of all attempts.
#[derive(Debug, Clone)]
pub struct Leaderboard {
    truth: BTreeMap<String, String>,
    public_ids: BTreeSet<String>,
    private_ids: BTreeSet<String>,
    limit_per_day: usize,
    records: Vec<SubmissionRecord>,
}

impl Leaderboard {
    pub fn new(truth: BTreeMap<String, (String, Subset)>, limit_per_day: usize) -> Result<Self> {
        if limit_per_day == 0 {
            return Err(Error::invalid("daily submission limit must be positive"));
        }
        let mut labels = BTreeMap::new();
        let mut public_ids = BTreeSet::new();
        let mut private_ids = BTreeSet::new();
        for (id, (label, subset)) in truth {
            match subset {
                Subset::Public => public_ids.insert(id.clone()),
                Subset::Private => private_ids.insert(id.clone()),
            };
            labels.insert(id, label);
        }
        if public_ids.is_empty() || private_ids.is_empty() {
            return Err(Error::invalid(
                "both leaderboard subsets need at least one segment",
            ));
        }
        Ok(Leaderboard {
            truth: labels,
            public_ids,
            private_ids,
            limit_per_day,
            records: Vec::new(),
        })
    }

    /// Rebuild a leaderboard from a previously written journal.
    pub fn with_history(
        truth: BTreeMap<String, (String, Subset)>,
        limit_per_day: usize,
        records: Vec<SubmissionRecord>,
    ) -> Result<Self> {
        let mut board = Leaderboard::new(truth, limit_per_day)?;
        board.records = records;
        Ok(board)
    }

    pub fn records(&self) -> &[SubmissionRecord] {
        &self.records
    }

    pub fn limit_per_day(&self) -> usize {
        self.limit_per_day
    }

    fn accepted_today(&self, team: &str, timestamp: DateTime<Utc>) -> usize {
        let day = timestamp.date_naive();
        self.records
            .iter()
            .filter(|r| r.accepted && r.team == team && r.timestamp.date_naive() == day)
            .count()
    }

    /// Score a submission against both halves. Over the daily limit the
    /// attempt is journaled as rejected and an error names the next
    /// allowed time; otherwise the receipt carries the public score only.
    pub fn submit(
        &mut self,
        team: &str,
        timestamp: DateTime<Utc>,
        predictions: &BTreeMap<String, String>,
    ) -> Result<SubmissionReceipt> {
        if self.accepted_today(team, timestamp) >= self.limit_per_day {
            self.records.push(SubmissionRecord {
                team: team.to_string(),
                timestamp,
                public_score: None,
                private_score: None,
                accepted: false,
            });
            let next_allowed = timestamp
                .date_naive()
                .checked_add_days(Days::new(1))
                .expect("date in range")
                .and_hms_opt(0, 0, 0)
                .expect("midnight exists")
                .and_utc();
            return Err(Error::SubmissionLimit {
                team: team.to_string(),
                next_allowed,
            });
        }
        let public_score = score_submission(predictions, &self.truth, &self.public_ids)?;
        let private_score = score_submission(predictions, &self.truth, &self.private_ids)?;
        self.records.push(SubmissionRecord {
            team: team.to_string(),
            timestamp,
            public_score: Some(public_score),
            private_score: Some(private_score),
            accepted: true,
        });
        Ok(SubmissionReceipt {
            team: team.to_string(),
            timestamp,
            public_score,
        })
    }

    /// Final standings: each team's best private score, best first. Teams
    /// without an accepted submission do not appear.
    pub fn final_ranking(&self) -> Vec<(String, f64)> {
        let mut best: BTreeMap<&str, f64> = BTreeMap::new();
        for r in &self.records {
            if let (true, Some(score)) = (r.accepted, r.private_score) {
                let entry = best.entry(&r.team).or_insert(f64::NEG_INFINITY);
                if score > *entry {
                    *entry = score;
                }
            }
        }
        let mut ranking: Vec<(String, f64)> =
            best.into_iter().map(|(t, s)| (t.to_string(), s)).collect();
        ranking.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .expect("finite scores")
                .then_with(|| a.0.cmp(&b.0))
        });
        ranking
    }
}

/// Attach subset tags to a labeled dataset's truth, per an evaluation
/// split over the same ids.
pub fn truth_with_subsets(
    dataset: &Dataset,
    split: &EvaluationSplit,
) -> Result<BTreeMap<String, (String, Subset)>> {
    let mut truth = BTreeMap::new();
    for seg in dataset.segments() {
        let label = seg
            .label
            .clone()
            .ok_or_else(|| Error::invalid(format!("segment {} has no label", seg.segment_id)))?;
        let subset = split.subset_of(&seg.segment_id).ok_or_else(|| {
            Error::invalid(format!("segment {} is not in the split", seg.segment_id))
        })?;
        truth.insert(seg.segment_id.clone(), (label, subset));
    }
    Ok(truth)
}

const SUBMISSION_COLUMNS: [&str; 2] = ["segment_id", "scene_label"];
const TRUTH_COLUMNS: [&str; 3] = ["segment_id", "scene_label", "subset"];
const JOURNAL_COLUMNS: [&str; 5] = ["team", "timestamp", "public_score", "private_score", "accepted"];

fn check_header(path: &Path, got: &csv::StringRecord, want: &[&str]) -> Result<()> {
    let got_cols: Vec<&str> = got.iter().collect();
    if got_cols != want {
        return Err(Error::manifest(
            path,
            format!("expected header {}, got {}", want.join(","), got_cols.join(",")),
        ));
    }
    Ok(())
}

/// Read a `segment_id,scene_label` submission file.
pub fn read_submission_csv(path: &Path) -> Result<BTreeMap<String, String>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::manifest(path, e.to_string()))?;
    check_header(
        path,
        &reader.headers().map_err(|e| Error::manifest(path, e.to_string()))?.clone(),
        &SUBMISSION_COLUMNS,
    )?;
    let mut predictions = BTreeMap::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::manifest(path, e.to_string()))?;
        let id = row.get(0).unwrap_or("").to_string();
        let label = row.get(1).unwrap_or("").to_string();
        if id.is_empty() {
            return Err(Error::manifest(path, "empty segment_id".to_string()));
        }
        if predictions.insert(id.clone(), label).is_some() {
            return Err(Error::manifest(path, format!("duplicate segment_id {id}")));
        }
    }
    Ok(predictions)
}

/// Write a `segment_id,scene_label` submission file in id order.
pub fn write_submission_csv(path: &Path, predictions: &BTreeMap<String, String>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::manifest(path, e.to_string()))?;
    writer
        .write_record(SUBMISSION_COLUMNS)
        .map_err(|e| Error::manifest(path, e.to_string()))?;
    for (id, label) in predictions {
        writer
            .write_record([id.as_str(), label.as_str()])
            .map_err(|e| Error::manifest(path, e.to_string()))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Read the harness-private `segment_id,scene_label,subset` truth file.
pub fn read_truth_csv(path: &Path) -> Result<BTreeMap<String, (String, Subset)>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::manifest(path, e.to_string()))?;
    check_header(
        path,
        &reader.headers().map_err(|e| Error::manifest(path, e.to_string()))?.clone(),
        &TRUTH_COLUMNS,
    )?;
    let mut truth = BTreeMap::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::manifest(path, e.to_string()))?;
        let id = row.get(0).unwrap_or("").to_string();
        let label = row.get(1).unwrap_or("").to_string();
        let subset = Subset::parse(row.get(2).unwrap_or(""))
            .map_err(|e| Error::manifest(path, e.to_string()))?;
        if id.is_empty() || label.is_empty() {
            return Err(Error::manifest(path, "empty segment_id or scene_label".to_string()));
        }
        if truth.insert(id.clone(), (label, subset)).is_some() {
            return Err(Error::manifest(path, format!("duplicate segment_id {id}")));
        }
    }
    Ok(truth)
}

/// Write the harness-private truth file in id order.
pub fn write_truth_csv(path: &Path, truth: &BTreeMap<String, (String, Subset)>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::manifest(path, e.to_string()))?;
    writer
        .write_record(TRUTH_COLUMNS)
        .map_err(|e| Error::manifest(path, e.to_string()))?;
    for (id, (label, subset)) in truth {
        writer
            .write_record([id.as_str(), label.as_str(), subset.as_str()])
            .map_err(|e| Error::manifest(path, e.to_string()))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn format_score(score: Option<f64>) -> String {
    score.map(|s| s.to_string()).unwrap_or_default()
}

fn parse_score(path: &Path, field: &str) -> Result<Option<f64>> {
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse::<f64>()
        .map(Some)
        .map_err(|e| Error::manifest(path, format!("bad score {field}: {e}")))
}

/// Write the full submission journal.
pub fn write_journal(path: &Path, records: &[SubmissionRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::manifest(path, e.to_string()))?;
    writer
        .write_record(JOURNAL_COLUMNS)
        .map_err(|e| Error::manifest(path, e.to_string()))?;
    for r in records {
        writer
            .write_record([
                r.team.as_str(),
                &r.timestamp.to_rfc3339_opts(SecondsFormat::Secs, true),
                &format_score(r.public_score),
                &format_score(r.private_score),
                if r.accepted { "true" } else { "false" },
            ])
            .map_err(|e| Error::manifest(path, e.to_string()))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Read a submission journal back into records.
pub fn read_journal(path: &Path) -> Result<Vec<SubmissionRecord>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::manifest(path, e.to_string()))?;
    check_header(
        path,
        &reader.headers().map_err(|e| Error::manifest(path, e.to_string()))?.clone(),
        &JOURNAL_COLUMNS,
    )?;
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::manifest(path, e.to_string()))?;
        let timestamp = DateTime::parse_from_rfc3339(row.get(1).unwrap_or(""))
            .map_err(|e| Error::manifest(path, format!("bad timestamp: {e}")))?
            .with_timezone(&Utc);
        let accepted = match row.get(4).unwrap_or("") {
            "true" => true,
            "false" => false,
            other => {
                return Err(Error::manifest(path, format!("bad accepted flag {other}")));
            }
        };
        records.push(SubmissionRecord {
            team: row.get(0).unwrap_or("").to_string(),
            timestamp,
            public_score: parse_score(path, row.get(2).unwrap_or(""))?,
            private_score: parse_score(path, row.get(3).unwrap_or(""))?,
            accepted,
        });
    }
    Ok(records)
}
