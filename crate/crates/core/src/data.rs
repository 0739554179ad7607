//! Data model: feature matrices, segments, datasets, one-hot targets, and
//! the on-disk formats they travel in.
//!
//! Feature files use the ASCF format: ASCII magic `ASCF`, a little-endian
//! u16 version (1), u32 row and column counts, then row-major 32-bit LE
//! floats. Rows are frequency bins, columns are time frames. Values are held
//! as f64 in memory; all arithmetic downstream accumulates in f64.

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};

/// Dense F x T grid of log mel-band energies, row-major, row = frequency bin.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl FeatureMatrix {
    /// Build a matrix, checking shape consistency and that every value is finite.
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid(format!(
                "feature matrix must be at least 1x1, got {rows}x{cols}"
            )));
        }
        if values.len() != rows * cols {
            return Err(Error::shape(format!(
                "feature matrix {rows}x{cols} expects {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "feature matrix value at index {idx} is not finite"
            )));
        }
        Ok(Self { rows, cols, values })
    }

    /// Internal constructor for values already known to satisfy the invariants.
    pub(crate) fn from_vec_unchecked(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), rows * cols);
        Self { rows, cols, values }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    /// One frequency bin across all time frames.
    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    /// Row-major copy of all values, for models that take flat vectors.
    pub fn to_flat_vec(&self) -> Vec<f64> {
        self.values.clone()
    }
}

/// One 10-second audio segment: identifiers, optional scene label, and a
/// reference to its feature file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub segment_id: String,
    pub recording_id: String,
    pub location_id: String,
    /// `None` for evaluation data released without ground truth.
    pub label: Option<String>,
    pub feature_ref: String,
}

/// An ordered collection of segments plus the label vocabulary derived from
/// them. Class index of a label is its position in the sorted vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    segments: Vec<Segment>,
    label_vocabulary: Vec<String>,
}

impl Dataset {
    /// Assemble a dataset, deriving the vocabulary from the labeled segments.
    /// Fails on duplicate segment ids.
    pub fn from_segments(segments: Vec<Segment>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for seg in &segments {
            if !seen.insert(seg.segment_id.as_str()) {
                return Err(Error::invalid(format!(
                    "duplicate segment_id {:?}",
                    seg.segment_id
                )));
            }
        }
        let vocab: BTreeSet<&str> = segments
            .iter()
            .filter_map(|s| s.label.as_deref())
            .collect();
        let label_vocabulary = vocab.into_iter().map(str::to_owned).collect();
        Ok(Self {
            segments,
            label_vocabulary,
        })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Sorted, duplicate-free list of scene classes present in the data.
    pub fn label_vocabulary(&self) -> &[String] {
        &self.label_vocabulary
    }

    pub fn class_count(&self) -> usize {
        self.label_vocabulary.len()
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Position of a label in the vocabulary, if present.
    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.label_vocabulary
            .binary_search_by(|l| l.as_str().cmp(label))
            .ok()
    }

    /// True when every segment carries a label.
    pub fn fully_labeled(&self) -> bool {
        self.segments.iter().all(|s| s.label.is_some())
    }
}

/// Length-C target vector; pure one-hot here, soft variants come from mixup.
#[derive(Debug, Clone, PartialEq)]
pub struct OneHotTarget {
    values: Vec<f64>,
}

impl OneHotTarget {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }
}

/// Encode a class index as a one-hot vector of length `class_count`.
pub fn one_hot(class_index: usize, class_count: usize) -> Result<OneHotTarget> {
    if class_count == 0 {
        return Err(Error::invalid("class count must be at least 1"));
    }
    if class_index >= class_count {
        return Err(Error::invalid(format!(
            "class index {class_index} out of range for {class_count} classes"
        )));
    }
    let mut values = vec![0.0; class_count];
    values[class_index] = 1.0;
    Ok(OneHotTarget { values })
}

const ASCF_MAGIC: &[u8; 4] = b"ASCF";
const ASCF_VERSION: u16 = 1;
const ASCF_HEADER_LEN: usize = 14;

/// Read a feature matrix from an ASCF file.
pub fn read_feature_matrix(path: &Path) -> Result<FeatureMatrix> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 4 || &bytes[0..4] != ASCF_MAGIC {
        return Err(Error::format(path, 0, "bad magic, expected \"ASCF\""));
    }
    if bytes.len() < ASCF_HEADER_LEN {
        return Err(Error::format(
            path,
            bytes.len() as u64,
            format!("truncated header: {} bytes, need {ASCF_HEADER_LEN}", bytes.len()),
        ));
    }
    let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
    if version != ASCF_VERSION {
        return Err(Error::format(
            path,
            4,
            format!("unsupported version {version}, expected {ASCF_VERSION}"),
        ));
    }
    let rows = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    if rows == 0 {
        return Err(Error::format(path, 6, "row count must be at least 1"));
    }
    if cols == 0 {
        return Err(Error::format(path, 10, "column count must be at least 1"));
    }
    let expected = ASCF_HEADER_LEN + rows * cols * 4;
    if bytes.len() != expected {
        let (offset, what) = if bytes.len() < expected {
            (bytes.len() as u64, "truncated payload")
        } else {
            (expected as u64, "trailing bytes after payload")
        };
        return Err(Error::format(
            path,
            offset,
            format!("{what}: expected {expected} bytes, found {}", bytes.len()),
        ));
    }
    let mut values = Vec::with_capacity(rows * cols);
    for i in 0..rows * cols {
        let offset = ASCF_HEADER_LEN + i * 4;
        let v = f32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::format(path, offset as u64, "non-finite value"));
        }
        values.push(f64::from(v));
    }
    Ok(FeatureMatrix::from_vec_unchecked(rows, cols, values))
}

/// Write a feature matrix as an ASCF file. Values are stored as 32-bit LE
/// floats; output bytes are deterministic for a given matrix. Nothing is
/// written if the matrix violates its invariants.
pub fn write_feature_matrix(matrix: &FeatureMatrix, path: &Path) -> Result<()> {
    if let Some(idx) = matrix.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!(
            "refusing to write non-finite value at index {idx}"
        )));
    }
    let mut bytes = Vec::with_capacity(ASCF_HEADER_LEN + matrix.values.len() * 4);
    bytes.extend_from_slice(ASCF_MAGIC);
    bytes.extend_from_slice(&ASCF_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(matrix.rows as u32).to_le_bytes());
    bytes.extend_from_slice(&(matrix.cols as u32).to_le_bytes());
    for v in &matrix.values {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

const MANIFEST_COLUMNS: [&str; 5] = [
    "segment_id",
    "recording_id",
    "location_id",
    "scene_label",
    "feature_path",
];

/// Load a dataset manifest CSV. Rows keep file order; the vocabulary is the
/// sorted set of distinct labels. An empty `scene_label` marks an unlabeled
/// (evaluation) segment.
pub fn load_manifest(path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::manifest(path, e.to_string()))?;

    let headers = reader
        .headers()
        .map_err(|e| Error::manifest(path, e.to_string()))?
        .clone();
    let mut index_of = [0usize; 5];
    for (slot, name) in MANIFEST_COLUMNS.iter().enumerate() {
        match headers.iter().position(|h| h == *name) {
            Some(i) => index_of[slot] = i,
            None => {
                return Err(Error::manifest(
                    path,
                    format!("missing required column {name:?}"),
                ))
            }
        }
    }
    for h in headers.iter() {
        if !MANIFEST_COLUMNS.contains(&h) {
            return Err(Error::manifest(path, format!("unknown column {h:?}")));
        }
    }

    let mut segments = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::manifest(path, e.to_string()))?;
        let field = |slot: usize| record.get(index_of[slot]).unwrap_or("").to_owned();
        let label = field(3);
        segments.push(Segment {
            segment_id: field(0),
            recording_id: field(1),
            location_id: field(2),
            label: if label.is_empty() { None } else { Some(label) },
            feature_ref: field(4),
        });
        if segments[row].segment_id.is_empty() {
            return Err(Error::manifest(path, format!("row {}: empty segment_id", row + 2)));
        }
    }

    Dataset::from_segments(segments).map_err(|e| match e {
        Error::InvalidArgument { reason } => Error::manifest(path, reason),
        other => other,
    })
}
