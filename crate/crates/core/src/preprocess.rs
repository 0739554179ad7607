//! Spectrogram feature engineering: temporal averaging, background
//! subtraction, and per-bin standardization.
//!
//! Temporal averaging collapses the time axis to one value per frequency
//! bin. Background subtraction removes each bin's own mean over time, so
//! low-energy bins are no longer masked by the absolute level of loud ones.
//! The standardizer is plain train-set z-scoring, kept here so pipelines
//! never touch test statistics.

use std::path::Path;

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};

/// Smallest standard deviation the standardizer will divide by.
pub const STD_FLOOR: f64 = 1e-6;

/// Mean of each frequency bin over all time frames, length `rows()`.
pub fn temporal_average(m: &FeatureMatrix) -> Vec<f64> {
    let cols = m.cols() as f64;
    (0..m.rows())
        .map(|f| m.row(f).iter().sum::<f64>() / cols)
        .collect()
}

/// Subtract each frequency bin's temporal mean, leaving every row with mean
/// zero. A second correction pass removes the rounding residue of the first,
/// which keeps repeated application stable.
pub fn background_subtract(m: &FeatureMatrix) -> FeatureMatrix {
    let cols = m.cols() as f64;
    let mut values = m.values().to_vec();
    for f in 0..m.rows() {
        let row = &mut values[f * m.cols()..(f + 1) * m.cols()];
        let mean = row.iter().sum::<f64>() / cols;
        for v in row.iter_mut() {
            *v -= mean;
        }
        let residue = row.iter().sum::<f64>() / cols;
        for v in row.iter_mut() {
            *v -= residue;
        }
    }
    FeatureMatrix::from_vec_unchecked(m.rows(), m.cols(), values)
}

/// Per-bin means and floored standard deviations pooled from a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizerStats {
    means: Vec<f64>,
    stds: Vec<f64>,
}

impl StandardizerStats {
    pub fn bins(&self) -> usize {
        self.means.len()
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn stds(&self) -> &[f64] {
        &self.stds
    }

    /// Identity transform for a given bin count: mean 0, std 1 everywhere.
    pub fn identity(bins: usize) -> Self {
        Self {
            means: vec![0.0; bins],
            stds: vec![1.0; bins],
        }
    }
}

/// Pool every time frame of every training matrix and compute per-bin mean
/// and population standard deviation, floored at [`STD_FLOOR`].
pub fn fit_standardizer(train: &[FeatureMatrix]) -> Result<StandardizerStats> {
    let first = train
        .first()
        .ok_or_else(|| Error::invalid("cannot fit standardizer on an empty training list"))?;
    let bins = first.rows();
    for (i, m) in train.iter().enumerate() {
        if m.rows() != bins {
            return Err(Error::shape(format!(
                "training matrix {i} has {} bins, expected {bins}",
                m.rows()
            )));
        }
    }
    let mut sums = vec![0.0; bins];
    let mut counts = vec![0usize; bins];
    for m in train {
        for f in 0..bins {
            sums[f] += m.row(f).iter().sum::<f64>();
            counts[f] += m.cols();
        }
    }
    let means: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &n)| s / n as f64)
        .collect();
    let mut sq = vec![0.0; bins];
    for m in train {
        for f in 0..bins {
            sq[f] += m.row(f).iter().map(|v| (v - means[f]).powi(2)).sum::<f64>();
        }
    }
    let stds = sq
        .iter()
        .zip(&counts)
        .map(|(s, &n)| (s / n as f64).sqrt().max(STD_FLOOR))
        .collect();
    Ok(StandardizerStats { means, stds })
}

/// z-score a matrix with previously fitted statistics.
pub fn apply_standardizer(stats: &StandardizerStats, m: &FeatureMatrix) -> Result<FeatureMatrix> {
    if m.rows() != stats.bins() {
        return Err(Error::shape(format!(
            "matrix has {} bins, standardizer expects {}",
            m.rows(),
            stats.bins()
        )));
    }
    let mut values = Vec::with_capacity(m.rows() * m.cols());
    for f in 0..m.rows() {
        for &v in m.row(f) {
            values.push((v - stats.means[f]) / stats.stds[f]);
        }
    }
    Ok(FeatureMatrix::from_vec_unchecked(m.rows(), m.cols(), values))
}

/// Write standardizer statistics as a `bin,mean,std` CSV.
pub fn write_standardizer(stats: &StandardizerStats, path: &Path) -> Result<()> {
    let mut out = String::from("bin,mean,std\n");
    for (bin, (mean, std)) in stats.means.iter().zip(&stats.stds).enumerate() {
        out.push_str(&format!("{bin},{mean},{std}\n"));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Read statistics written by [`write_standardizer`].
pub fn read_standardizer(path: &Path) -> Result<StandardizerStats> {
    let mut reader =
        csv::Reader::from_path(path).map_err(|e| Error::manifest(path, e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::manifest(path, e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["bin", "mean", "std"] {
        return Err(Error::manifest(path, "expected header bin,mean,std"));
    }
    let mut means = Vec::new();
    let mut stds = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::manifest(path, e.to_string()))?;
        let parse = |field: usize, name: &str| -> Result<f64> {
            record
                .get(field)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::manifest(path, format!("row {}: bad {name}", row + 2)))
        };
        let bin = parse(0, "bin")? as usize;
        if bin != row {
            return Err(Error::manifest(
                path,
                format!("row {}: bins must be consecutive from 0", row + 2),
            ));
        }
        means.push(parse(1, "mean")?);
        let std = parse(2, "std")?;
        if std < STD_FLOOR {
            return Err(Error::manifest(
                path,
                format!("row {}: std below floor {STD_FLOOR}", row + 2),
            ));
        }
        stds.push(std);
    }
    if means.is_empty() {
        return Err(Error::manifest(path, "no bins"));
    }
    Ok(StandardizerStats { means, stds })
}
