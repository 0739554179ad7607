//! Error type shared by all toolkit modules.

use std::path::PathBuf;

use chrono::{DateTime, Utc};
use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed feature or model file; `offset` is the byte position of the defect.
    #[error("{path}: format error at byte {offset}: {reason}")]
    Format {
        path: PathBuf,
        offset: u64,
        reason: String,
    },

    /// I/O failure carrying the path it occurred on.
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Manifest / CSV content violation (duplicate ids, bad header, bad field).
    #[error("{path}: {reason}")]
    Manifest { path: PathBuf, reason: String },

    /// Dimension mismatch between related values.
    #[error("shape mismatch: {reason}")]
    Shape { reason: String },

    /// Argument outside its documented domain.
    #[error("invalid argument: {reason}")]
    InvalidArgument { reason: String },

    /// Fewer distinct groups than requested folds.
    #[error("insufficient groups: {available} available, {requested} folds requested")]
    InsufficientGroups { requested: usize, available: usize },

    /// Training diverged (non-finite loss).
    #[error("training diverged at iteration {iteration} (lr = {lr})")]
    Divergence { iteration: usize, lr: f64 },

    /// Error from a per-fold training, annotated with the fold index.
    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    /// Error while scoring a split candidate, annotated with its index.
    #[error("candidate {index}: {source}")]
    Candidate {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    /// Split targets cannot be met for a class no matter the assignment.
    #[error("class {class}: targets infeasible: {reason}")]
    InfeasibleTargets { class: String, reason: String },

    /// Candidate resampling gave up before finding a valid assignment.
    #[error("class {class}: retry cap of {cap} exhausted while sampling a valid assignment")]
    RetriesExhausted { class: String, cap: usize },

    /// Submission missing predictions for evaluation segments (first few listed).
    #[error("submission missing {count} segment id(s): {}", sample.join(", "))]
    MissingIds { count: usize, sample: Vec<String> },

    /// Predicted label not present in the truth vocabulary.
    #[error("unknown label {label:?} for segment {segment_id:?}")]
    UnknownLabel { segment_id: String, label: String },

    /// Daily submission quota reached.
    #[error("submission limit reached for team {team:?}; next allowed at {next_allowed}")]
    SubmissionLimit {
        team: String,
        next_allowed: DateTime<Utc>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, offset: u64, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            offset,
            reason: reason.into(),
        }
    }

    pub(crate) fn manifest(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Manifest {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn shape(reason: impl Into<String>) -> Self {
        Error::Shape {
            reason: reason.into(),
        }
    }

    pub(crate) fn invalid(reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
