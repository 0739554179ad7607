//! Acoustically balanced dataset splitting.
//!
//! Feature matrices are aggregated over sliding analysis windows, a
//! diagonal-covariance Gaussian mixture is fitted to each side of a
//! candidate development/evaluation split, and the empirical symmetric
//! Kullback-Leibler divergence between the two mixtures scores how
//! acoustically similar the sides are. Many random whole-recording splits
//! are generated and one is drawn from the most similar quartile.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::Rng;

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::rng::Prng;

/// Smallest admissible mixture variance per dimension.
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// Attempts allowed per class when coin-flipping recordings before the
/// segment targets must be met.
pub const ASSIGNMENT_RETRY_CAP: usize = 1000;

/// Per-bin mean and per-bin standard deviation over one analysis window,
/// concatenated: for F bins the vector holds F means then F stds.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedPoint {
    pub values: Vec<f64>,
}

/// Slide a window of `window` frames with `hop` frame steps over the
/// matrix and summarize each position by per-bin mean and population
/// standard deviation. Windows start at 0, hop, 2·hop, ... while they
/// still fit entirely inside the matrix.
pub fn aggregate_windows(
    m: &FeatureMatrix,
    window: usize,
    hop: usize,
) -> Result<Vec<AggregatedPoint>> {
    if window == 0 {
        return Err(Error::invalid("analysis window must cover at least one frame"));
    }
    if hop == 0 || hop > window {
        return Err(Error::invalid(format!(
            "hop must lie in 1..=window, got hop {hop} for window {window}"
        )));
    }
    if m.cols() < window {
        return Err(Error::shape(format!(
            "matrix has {} frames, shorter than the {window}-frame analysis window",
            m.cols()
        )));
    }
    let bins = m.rows();
    let mut points = Vec::new();
    let mut start = 0;
    while start + window <= m.cols() {
        let mut values = vec![0.0; 2 * bins];
        for bin in 0..bins {
            let row = m.row(bin);
            let slice = &row[start..start + window];
            let mean = slice.iter().sum::<f64>() / window as f64;
            let var = slice.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / window as f64;
            values[bin] = mean;
            values[bins + bin] = var.sqrt();
        }
        points.push(AggregatedPoint { values });
        start += hop;
    }
    Ok(points)
}

/// Diagonal-covariance Gaussian mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
}

impl GmmModel {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::invalid("a mixture needs at least one component"));
        }
        if means.len() != k || variances.len() != k {
            return Err(Error::shape(format!(
                "{k} weights but {} means and {} variances",
                means.len(),
                variances.len()
            )));
        }
        let dim = means[0].len();
        if dim == 0 {
            return Err(Error::invalid("mixture dimension must be at least 1"));
        }
        for (mean, var) in means.iter().zip(&variances) {
            if mean.len() != dim || var.len() != dim {
                return Err(Error::shape("ragged mixture parameters".to_string()));
            }
            if !var.iter().all(|&v| v >= VARIANCE_FLOOR) {
                return Err(Error::invalid(format!(
                    "variances must be at least {VARIANCE_FLOOR}"
                )));
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || weights.iter().any(|&w| !(0.0..=1.0).contains(&w)) {
            return Err(Error::invalid(format!(
                "component weights must form a distribution, sum {sum}"
            )));
        }
        Ok(GmmModel {
            weights,
            means,
            variances,
        })
    }

    pub fn component_count(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn variances(&self) -> &[Vec<f64>] {
        &self.variances
    }
}

/// Expectation-maximization settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmmConfig {
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        GmmConfig {
            max_iters: 100,
            tol: 1e-6,
            seed: 0,
        }
    }
}

impl GmmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::invalid("EM needs at least one iteration"));
        }
        if !self.tol.is_finite() || self.tol < 0.0 {
            return Err(Error::invalid(format!(
                "convergence tolerance must be a nonnegative real, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

/// A fitted mixture with its final log-likelihood and the log-likelihood
/// observed at the start of every EM iteration (ending with the final
/// model's own value).
#[derive(Debug, Clone)]
pub struct GmmFit {
    pub model: GmmModel,
    pub log_likelihood: f64,
    pub ll_history: Vec<f64>,
}

fn component_log_density(mean: &[f64], variance: &[f64], x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for d in 0..mean.len() {
        let diff = x[d] - mean[d];
        acc += (2.0 * std::f64::consts::PI * variance[d]).ln() + diff * diff / variance[d];
    }
    -0.5 * acc
}

/// Log of the mixture density at `x`, via log-sum-exp over components.
pub fn gmm_log_density(model: &GmmModel, x: &[f64]) -> Result<f64> {
    if x.len() != model.dim() {
        return Err(Error::shape(format!(
            "point has dimension {}, mixture has {}",
            x.len(),
            model.dim()
        )));
    }
    let terms: Vec<f64> = (0..model.component_count())
        .map(|k| model.weights[k].ln() + component_log_density(&model.means[k], &model.variances[k], x))
        .collect();
    Ok(log_sum_exp(&terms))
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

fn global_variance(points: &[&[f64]], dim: usize) -> Vec<f64> {
    let n = points.len() as f64;
    let mut mean = vec![0.0; dim];
    for p in points {
        for d in 0..dim {
            mean[d] += p[d];
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut var = vec![0.0; dim];
    for p in points {
        for d in 0..dim {
            var[d] += (p[d] - mean[d]).powi(2);
        }
    }
    for v in var.iter_mut() {
        *v = (*v / n).max(VARIANCE_FLOOR);
    }
    var
}

/// Per-point responsibilities and total log-likelihood of the current
/// parameters.
fn e_step(model: &GmmModel, points: &[&[f64]]) -> (f64, Vec<Vec<f64>>, Vec<f64>) {
    let k = model.component_count();
    let mut resp = Vec::with_capacity(points.len());
    let mut point_ll = Vec::with_capacity(points.len());
    let mut total = 0.0;
    for p in points {
        let terms: Vec<f64> = (0..k)
            .map(|c| {
                model.weights[c].ln()
                    + component_log_density(&model.means[c], &model.variances[c], p)
            })
            .collect();
        let lse = log_sum_exp(&terms);
        point_ll.push(lse);
        total += lse;
        resp.push(terms.iter().map(|t| (t - lse).exp()).collect());
    }
    (total, resp, point_ll)
}

/// Fit a K-component diagonal GMM by EM. Means start at K distinct
/// sampled data points, variances at the global per-dimension variance,
/// weights uniform. Iteration stops at `max_iters` or when the relative
/// log-likelihood improvement falls below `tol`. A component whose
/// responsibility mass vanishes is re-seeded at the lowest-density point.
pub fn gmm_fit(points: &[AggregatedPoint], k: usize, config: &GmmConfig) -> Result<GmmFit> {
    config.validate()?;
    if k == 0 {
        return Err(Error::invalid("a mixture needs at least one component"));
    }
    if points.len() < k {
        return Err(Error::invalid(format!(
            "cannot fit {k} components to {} points",
            points.len()
        )));
    }
    let dim = points[0].values.len();
    if dim == 0 {
        return Err(Error::invalid("points must have at least one dimension"));
    }
    let views: Vec<&[f64]> = points
        .iter()
        .map(|p| {
            if p.values.len() != dim {
                return Err(Error::shape(format!(
                    "point dimension {} differs from {}",
                    p.values.len(),
                    dim
                )));
            }
            if p.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("points must be finite"));
            }
            Ok(p.values.as_slice())
        })
        .collect::<Result<_>>()?;

    let n = views.len();
    let mut rng = <Prng as rand::SeedableRng>::seed_from_u64(config.seed);
    let init_var = global_variance(&views, dim);
    let mut model = GmmModel {
        weights: vec![1.0 / k as f64; k],
        means: sample(&mut rng, n, k)
            .into_iter()
            .map(|i| views[i].to_vec())
            .collect(),
        variances: vec![init_var.clone(); k],
    };

    let mut ll_history: Vec<f64> = Vec::new();
    for _ in 0..config.max_iters {
        let (ll, resp, point_ll) = e_step(&model, &views);
        if let Some(&prev) = ll_history.last() {
            ll_history.push(ll);
            if ll - prev < config.tol * prev.abs().max(1.0) {
                return Ok(GmmFit {
                    model,
                    log_likelihood: ll,
                    ll_history,
                });
            }
        } else {
            ll_history.push(ll);
        }

        let mut reseed = Vec::new();
        for c in 0..k {
            let mass: f64 = resp.iter().map(|r| r[c]).sum();
            if mass < 1e-12 {
                reseed.push(c);
                continue;
            }
            let mut mean = vec![0.0; dim];
            for (r, p) in resp.iter().zip(&views) {
                for d in 0..dim {
                    mean[d] += r[c] * p[d];
                }
            }
            for m in mean.iter_mut() {
                *m /= mass;
            }
            let mut var = vec![0.0; dim];
            for (r, p) in resp.iter().zip(&views) {
                for d in 0..dim {
                    var[d] += r[c] * (p[d] - mean[d]).powi(2);
                }
            }
            for v in var.iter_mut() {
                *v = (*v / mass).max(VARIANCE_FLOOR);
            }
            model.weights[c] = mass / n as f64;
            model.means[c] = mean;
            model.variances[c] = var;
        }
        if !reseed.is_empty() {
            let worst = point_ll
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.partial_cmp(b.1).expect("finite log densities"))
                .map(|(i, _)| i)
                .expect("nonempty point set");
            for &c in &reseed {
                model.means[c] = views[worst].to_vec();
                model.variances[c] = init_var.clone();
                model.weights[c] = 1.0 / n as f64;
            }
            let sum: f64 = model.weights.iter().sum();
            for w in model.weights.iter_mut() {
                *w /= sum;
            }
        }
    }

    let (final_ll, _, _) = e_step(&model, &views);
    ll_history.push(final_ll);
    Ok(GmmFit {
        model,
        log_likelihood: final_ll,
        ll_history,
    })
}

/// Empirical symmetric Kullback-Leibler divergence between two mixtures,
/// estimated on their own point sets:
/// mean over A of [log p_A − log p_B] plus mean over B of [log p_B − log p_A].
pub fn empirical_symmetric_kl(
    model_a: &GmmModel,
    points_a: &[AggregatedPoint],
    model_b: &GmmModel,
    points_b: &[AggregatedPoint],
) -> Result<f64> {
    if points_a.is_empty() || points_b.is_empty() {
        return Err(Error::invalid("divergence needs nonempty point sets on both sides"));
    }
    if model_a.dim() != model_b.dim() {
        return Err(Error::shape(format!(
            "mixtures have dimensions {} and {}",
            model_a.dim(),
            model_b.dim()
        )));
    }
    let mut forward = 0.0;
    for p in points_a {
        forward += gmm_log_density(model_a, &p.values)? - gmm_log_density(model_b, &p.values)?;
    }
    let mut backward = 0.0;
    for p in points_b {
        backward += gmm_log_density(model_b, &p.values)? - gmm_log_density(model_a, &p.values)?;
    }
    Ok(forward / points_a.len() as f64 + backward / points_b.len() as f64)
}

/// One recording and the segment ids it contains.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordingGroup {
    pub recording_id: String,
    pub segment_ids: Vec<String>,
}

/// All recordings of one scene class, the unit candidates are drawn from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassPool {
    pub class_label: String,
    pub recordings: Vec<RecordingGroup>,
}

/// Per-class outcome of one random split: recordings per side and the
/// segments picked to hit the targets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassAssignment {
    pub class_label: String,
    pub development_recordings: Vec<String>,
    pub evaluation_recordings: Vec<String>,
    pub development_segments: Vec<String>,
    pub evaluation_segments: Vec<String>,
}

/// One candidate development/evaluation split over all classes.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitCandidate {
    pub assignments: Vec<ClassAssignment>,
    /// Divergence score, filled in once the candidate has been evaluated.
    pub score: Option<f64>,
}

impl SplitCandidate {
    pub fn development_segments(&self) -> impl Iterator<Item = &str> {
        self.assignments
            .iter()
            .flat_map(|a| a.development_segments.iter().map(String::as_str))
    }

    pub fn evaluation_segments(&self) -> impl Iterator<Item = &str> {
        self.assignments
            .iter()
            .flat_map(|a| a.evaluation_segments.iter().map(String::as_str))
    }
}

fn pick_segments(
    recordings: &[&RecordingGroup],
    count: usize,
    rng: &mut Prng,
) -> Vec<String> {
    let pool: Vec<&str> = recordings
        .iter()
        .flat_map(|r| r.segment_ids.iter().map(String::as_str))
        .collect();
    let mut indices: Vec<usize> = sample(rng, pool.len(), count).into_iter().collect();
    indices.sort_unstable();
    indices.into_iter().map(|i| pool[i].to_string()).collect()
}

fn assign_class(
    pool: &ClassPool,
    dev_target: usize,
    eval_target: usize,
    rng: &mut Prng,
) -> Result<ClassAssignment> {
    for _ in 0..ASSIGNMENT_RETRY_CAP {
        let mut dev: Vec<&RecordingGroup> = Vec::new();
        let mut eval: Vec<&RecordingGroup> = Vec::new();
        for rec in &pool.recordings {
            if rng.random_bool(0.5) {
                dev.push(rec);
            } else {
                eval.push(rec);
            }
        }
        let dev_total: usize = dev.iter().map(|r| r.segment_ids.len()).sum();
        let eval_total: usize = eval.iter().map(|r| r.segment_ids.len()).sum();
        if dev_total < dev_target || eval_total < eval_target {
            continue;
        }
        return Ok(ClassAssignment {
            class_label: pool.class_label.clone(),
            development_recordings: dev.iter().map(|r| r.recording_id.clone()).collect(),
            evaluation_recordings: eval.iter().map(|r| r.recording_id.clone()).collect(),
            development_segments: pick_segments(&dev, dev_target, rng),
            evaluation_segments: pick_segments(&eval, eval_target, rng),
        });
    }
    Err(Error::RetriesExhausted {
        class: pool.class_label.clone(),
        cap: ASSIGNMENT_RETRY_CAP,
    })
}

/// Generate `n_candidates` random whole-recording splits, each filling the
/// per-class segment targets exactly.
pub fn generate_candidates(
    pools: &[ClassPool],
    dev_target: usize,
    eval_target: usize,
    n_candidates: usize,
    rng: &mut Prng,
) -> Result<Vec<SplitCandidate>> {
    if pools.is_empty() {
        return Err(Error::invalid("candidate generation needs at least one class"));
    }
    if dev_target == 0 || eval_target == 0 {
        return Err(Error::invalid("both segment targets must be positive"));
    }
    if n_candidates == 0 {
        return Err(Error::invalid("candidate count must be positive"));
    }
    for pool in pools {
        if pool.recordings.len() < 2 {
            return Err(Error::InfeasibleTargets {
                class: pool.class_label.clone(),
                reason: "both sets need segments, but the class has fewer than 2 recordings"
                    .to_string(),
            });
        }
        let total: usize = pool.recordings.iter().map(|r| r.segment_ids.len()).sum();
        if total < dev_target + eval_target {
            return Err(Error::InfeasibleTargets {
                class: pool.class_label.clone(),
                reason: format!(
                    "{total} segments cannot fill targets {dev_target}+{eval_target}"
                ),
            });
        }
    }
    let mut candidates = Vec::with_capacity(n_candidates);
    for _ in 0..n_candidates {
        let assignments = pools
            .iter()
            .map(|pool| assign_class(pool, dev_target, eval_target, rng))
            .collect::<Result<Vec<_>>>()?;
        candidates.push(SplitCandidate {
            assignments,
            score: None,
        });
    }
    Ok(candidates)
}

/// Divergence of one candidate: pool each side's aggregated points over
/// all classes, fit one mixture per side, and compare.
pub fn score_candidate_divergence(
    candidate: &SplitCandidate,
    points_of_segment: &BTreeMap<String, Vec<AggregatedPoint>>,
    components: usize,
    config: &GmmConfig,
) -> Result<f64> {
    let pool_side = |ids: &mut dyn Iterator<Item = &str>| -> Result<Vec<AggregatedPoint>> {
        let mut pooled = Vec::new();
        for id in ids {
            let points = points_of_segment.get(id).ok_or_else(|| {
                Error::invalid(format!("no aggregated points for segment {id}"))
            })?;
            pooled.extend(points.iter().cloned());
        }
        Ok(pooled)
    };
    let dev_points = pool_side(&mut candidate.development_segments())?;
    let eval_points = pool_side(&mut candidate.evaluation_segments())?;
    let dev_fit = gmm_fit(&dev_points, components, config)?;
    let eval_fit = gmm_fit(&eval_points, components, config)?;
    empirical_symmetric_kl(&dev_fit.model, &dev_points, &eval_fit.model, &eval_points)
}

/// A selected split along with every candidate's score.
#[derive(Debug, Clone)]
pub struct BalancedSplit {
    pub selected: SplitCandidate,
    pub selected_index: usize,
    pub scores: Vec<f64>,
}

/// Score every candidate, keep the lowest-divergence quarter (rounded up),
/// and return one of those uniformly at random.
pub fn select_balanced_split<F>(
    candidates: &[SplitCandidate],
    mut scorer: F,
    rng: &mut Prng,
) -> Result<BalancedSplit>
where
    F: FnMut(&SplitCandidate, usize) -> Result<f64>,
{
    if candidates.len() < 4 {
        return Err(Error::invalid(format!(
            "quartile selection needs at least 4 candidates, got {}",
            candidates.len()
        )));
    }
    let mut scores = Vec::with_capacity(candidates.len());
    for (index, candidate) in candidates.iter().enumerate() {
        let score = scorer(candidate, index).map_err(|e| Error::Candidate {
            index,
            source: Box::new(e),
        })?;
        if !score.is_finite() {
            return Err(Error::Candidate {
                index,
                source: Box::new(Error::invalid(format!("non-finite divergence {score}"))),
            });
        }
        scores.push(score);
    }
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        scores[a]
            .partial_cmp(&scores[b])
            .expect("finite scores")
            .then(a.cmp(&b))
    });
    let keep = candidates.len().div_ceil(4);
    let pick = order[rng.random_range(0..keep)];
    let mut selected = candidates[pick].clone();
    selected.score = Some(scores[pick]);
    Ok(BalancedSplit {
        selected,
        selected_index: pick,
        scores,
    })
}
