//! Trainable softmax classifiers: linear (softmax regression) and a
//! one-hidden-layer perceptron with tanh activation.
//!
//! Training is mini-batch SGD over soft-target cross-entropy with optional
//! momentum, ℓ2 weight decay (weights only, never biases), inverted dropout
//! on the hidden layer, and a triangular cyclic learning rate. All
//! accumulation is in f64, which is what makes the finite-difference
//! gradient check meaningful.
//!
//! Models serialize to the ASCM format: ASCII magic `ASCM`, a little-endian
//! u16 version (1), a u8 architecture tag (0 = linear, 1 = mlp), u32
//! input dimension, class count and hidden width (0 for linear), then the
//! parameters as 64-bit LE floats in layer order.

use std::ops::Range;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::Prng;

/// Probabilities below this are clamped before taking logs.
pub const CE_EPSILON: f64 = 1e-12;

const FD_STEP: f64 = 1e-5;

/// Network shape. Parameters are stored flat in layer order:
/// linear = `[W (C×P), b (C)]`; mlp = `[W1 (H×P), b1 (H), W2 (C×H), b2 (C)]`,
/// all matrices row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    Linear,
    Mlp { hidden_units: usize },
}

impl Architecture {
    pub fn param_count(&self, input_dim: usize, class_count: usize) -> usize {
        match *self {
            Architecture::Linear => class_count * (input_dim + 1),
            Architecture::Mlp { hidden_units: h } => h * (input_dim + 1) + class_count * (h + 1),
        }
    }

    /// Index ranges of weight matrices (everything that is not a bias),
    /// the spans ℓ2 decay applies to.
    fn weight_spans(&self, input_dim: usize, class_count: usize) -> Vec<Range<usize>> {
        match *self {
            Architecture::Linear => {
                let weights = 0..class_count * input_dim;
                vec![weights]
            }
            Architecture::Mlp { hidden_units: h } => {
                let w1 = h * input_dim;
                vec![0..w1, w1 + h..w1 + h + class_count * h]
            }
        }
    }
}

/// A classifier with flat parameter storage (layout under [`Architecture`]).
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    arch: Architecture,
    input_dim: usize,
    class_count: usize,
    params: Vec<f64>,
}

impl ClassifierModel {
    /// Fresh model with zero biases and weights drawn uniformly from
    /// ±1/√fan_in.
    pub fn new(
        arch: Architecture,
        input_dim: usize,
        class_count: usize,
        rng: &mut Prng,
    ) -> Result<Self> {
        Self::check_dims(arch, input_dim, class_count)?;
        let mut params = vec![0.0; arch.param_count(input_dim, class_count)];
        match arch {
            Architecture::Linear => {
                let scale = 1.0 / (input_dim as f64).sqrt();
                for p in params.iter_mut().take(class_count * input_dim) {
                    *p = rng.random_range(-scale..scale);
                }
            }
            Architecture::Mlp { hidden_units: h } => {
                let s1 = 1.0 / (input_dim as f64).sqrt();
                for p in params.iter_mut().take(h * input_dim) {
                    *p = rng.random_range(-s1..s1);
                }
                let s2 = 1.0 / (h as f64).sqrt();
                let w2 = h * input_dim + h;
                for p in params.iter_mut().skip(w2).take(class_count * h) {
                    *p = rng.random_range(-s2..s2);
                }
            }
        }
        Ok(Self {
            arch,
            input_dim,
            class_count,
            params,
        })
    }

    /// Build a model from explicit parameters (layout under [`Architecture`]).
    pub fn from_params(
        arch: Architecture,
        input_dim: usize,
        class_count: usize,
        params: Vec<f64>,
    ) -> Result<Self> {
        Self::check_dims(arch, input_dim, class_count)?;
        let expected = arch.param_count(input_dim, class_count);
        if params.len() != expected {
            return Err(Error::shape(format!(
                "expected {expected} parameters for this architecture, got {}",
                params.len()
            )));
        }
        if let Some(i) = params.iter().position(|p| !p.is_finite()) {
            return Err(Error::invalid(format!("parameter {i} is not finite")));
        }
        Ok(Self {
            arch,
            input_dim,
            class_count,
            params,
        })
    }

    fn check_dims(arch: Architecture, input_dim: usize, class_count: usize) -> Result<()> {
        if input_dim == 0 {
            return Err(Error::invalid("input dimension must be at least 1"));
        }
        if class_count < 2 {
            return Err(Error::invalid("class count must be at least 2"));
        }
        if let Architecture::Mlp { hidden_units: 0 } = arch {
            return Err(Error::invalid("mlp hidden width must be at least 1"));
        }
        Ok(())
    }

    pub fn arch(&self) -> Architecture {
        self.arch
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Class probabilities for one input.
    pub fn forward(&self, x: &[f64]) -> Result<ProbabilityVector> {
        if x.len() != self.input_dim {
            return Err(Error::shape(format!(
                "input has dimension {}, model expects {}",
                x.len(),
                self.input_dim
            )));
        }
        let (_, logits) = self.activations(x, None);
        Ok(softmax(&logits))
    }

    /// Hidden activations (post-dropout when a mask is given; empty for
    /// linear models) and logits.
    fn activations(&self, x: &[f64], mask: Option<&[f64]>) -> (Vec<f64>, Vec<f64>) {
        match self.arch {
            Architecture::Linear => {
                let p = self.input_dim;
                let bias = self.class_count * p;
                let logits = (0..self.class_count)
                    .map(|c| {
                        self.params[bias + c]
                            + dot(&self.params[c * p..(c + 1) * p], x)
                    })
                    .collect();
                (Vec::new(), logits)
            }
            Architecture::Mlp { hidden_units: h } => {
                let p = self.input_dim;
                let b1 = h * p;
                let w2 = b1 + h;
                let b2 = w2 + self.class_count * h;
                let mut hidden: Vec<f64> = (0..h)
                    .map(|j| (self.params[b1 + j] + dot(&self.params[j * p..(j + 1) * p], x)).tanh())
                    .collect();
                if let Some(mask) = mask {
                    for (v, m) in hidden.iter_mut().zip(mask) {
                        *v *= m;
                    }
                }
                let logits = (0..self.class_count)
                    .map(|c| {
                        self.params[b2 + c]
                            + dot(&self.params[w2 + c * h..w2 + (c + 1) * h], &hidden)
                    })
                    .collect();
                (hidden, logits)
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A length-C probability distribution over classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector {
    values: Vec<f64>,
}

impl ProbabilityVector {
    /// Validate an externally supplied distribution: entries in [0,1] and
    /// summing to 1 within 1e-9.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("probability vector cannot be empty"));
        }
        if values.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::invalid("probabilities must lie in [0,1]"));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "probabilities must sum to 1, got {sum}"
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    /// Index of the largest probability; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate().skip(1) {
            if *v > self.values[best] {
                best = i;
            }
        }
        best
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Numerically stabilized softmax (max logit subtracted before exp).
fn softmax(logits: &[f64]) -> ProbabilityVector {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    ProbabilityVector {
        values: exps.iter().map(|e| e / sum).collect(),
    }
}

/// Soft-target cross-entropy, −Σ target·ln(pred) with ε-clamped logs.
pub fn cross_entropy(pred: &ProbabilityVector, target: &[f64]) -> f64 {
    assert_eq!(
        pred.values.len(),
        target.len(),
        "prediction and target class counts must match"
    );
    -pred
        .values
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            // Clamp only genuinely small probabilities; a NaN must fall
            // through so diverged training is detected, not masked.
            let clamped = if p < CE_EPSILON { CE_EPSILON } else { p };
            t * clamped.ln()
        })
        .sum::<f64>()
}

/// One training sample: a feature row paired with its soft target.
pub type TrainingPair = (Vec<f64>, Vec<f64>);

/// SGD settings. `seed` is a bookkeeping field for run configs; the training
/// loop itself draws from the PRNG passed to [`train`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub max_lr: f64,
    pub clr_step_size: usize,
    pub clr_enabled: bool,
    pub weight_decay: f64,
    pub dropout_rate: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            base_lr: 0.01,
            max_lr: 0.1,
            clr_step_size: 100,
            clr_enabled: false,
            weight_decay: 0.0,
            dropout_rate: 0.0,
            momentum: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if self.base_lr.is_nan() || self.base_lr <= 0.0 {
            return Err(Error::invalid("base_lr must be positive"));
        }
        if self.max_lr < self.base_lr {
            return Err(Error::invalid("max_lr must be at least base_lr"));
        }
        if self.clr_enabled && self.clr_step_size == 0 {
            return Err(Error::invalid("clr_step_size must be at least 1"));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::invalid("weight_decay must be nonnegative"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::invalid("dropout_rate must be in [0,1)"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must be in [0,1)"));
        }
        Ok(())
    }
}

/// Triangular cyclic learning rate at iteration `t`; the base rate when the
/// schedule is disabled.
pub fn clr_learning_rate(t: usize, config: &TrainConfig) -> f64 {
    if !config.clr_enabled {
        return config.base_lr;
    }
    let step = config.clr_step_size as f64;
    let cycle = (1.0 + t as f64 / (2.0 * step)).floor();
    let x = (t as f64 / step - 2.0 * cycle + 1.0).abs();
    config.base_lr + (config.max_lr - config.base_lr) * (1.0 - x).max(0.0)
}

/// Loss and gradient of one sample, accumulated into `grad` (same layout as
/// the parameter vector). `mask` is the inverted-dropout mask for the hidden
/// layer, when active.
fn sample_loss_and_grad(
    model: &ClassifierModel,
    x: &[f64],
    y: &[f64],
    mask: Option<&[f64]>,
    grad: &mut [f64],
) -> f64 {
    let (hidden, logits) = model.activations(x, mask);
    let pred = softmax(&logits);
    let loss = cross_entropy(&pred, y);
    let delta: Vec<f64> = pred.values.iter().zip(y).map(|(&p, &t)| p - t).collect();
    let p = model.input_dim;
    let c = model.class_count;
    match model.arch {
        Architecture::Linear => {
            for (ci, &d) in delta.iter().enumerate() {
                for (pi, &xv) in x.iter().enumerate() {
                    grad[ci * p + pi] += d * xv;
                }
                grad[c * p + ci] += d;
            }
        }
        Architecture::Mlp { hidden_units: h } => {
            let b1 = h * p;
            let w2 = b1 + h;
            let b2 = w2 + c * h;
            for (ci, &d) in delta.iter().enumerate() {
                for (j, &hv) in hidden.iter().enumerate() {
                    grad[w2 + ci * h + j] += d * hv;
                }
                grad[b2 + ci] += d;
            }
            for j in 0..h {
                let upstream: f64 = delta
                    .iter()
                    .enumerate()
                    .map(|(ci, &d)| d * model.params[w2 + ci * h + j])
                    .sum();
                // hidden[j] = m·tanh(a); recover tanh(a) to form the tanh
                // derivative under the same mask scaling.
                let m = mask.map_or(1.0, |mk| mk[j]);
                if m == 0.0 {
                    continue;
                }
                let t = hidden[j] / m;
                let da = upstream * m * (1.0 - t * t);
                for (pi, &xv) in x.iter().enumerate() {
                    grad[j * p + pi] += da * xv;
                }
                grad[b1 + j] += da;
            }
        }
    }
    loss
}

/// Mean cross-entropy of a batch under the current parameters, dropout off.
fn batch_loss(model: &ClassifierModel, batch: &[TrainingPair]) -> f64 {
    let total: f64 = batch
        .iter()
        .map(|(x, y)| {
            let (_, logits) = model.activations(x, None);
            cross_entropy(&softmax(&logits), y)
        })
        .sum();
    total / batch.len() as f64
}

/// Mini-batch SGD. Returns the trained model and the mean per-sample loss of
/// each epoch (measured on the forward passes before each update, under the
/// epoch's dropout masks).
pub fn train(
    model: ClassifierModel,
    data: &[TrainingPair],
    config: &TrainConfig,
    rng: &mut Prng,
) -> Result<(ClassifierModel, Vec<f64>)> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("training data must be nonempty"));
    }
    for (i, (x, y)) in data.iter().enumerate() {
        if x.len() != model.input_dim || y.len() != model.class_count {
            return Err(Error::shape(format!(
                "sample {i} has dimensions ({}, {}), model expects ({}, {})",
                x.len(),
                y.len(),
                model.input_dim,
                model.class_count
            )));
        }
    }
    let mut model = model;
    let mut history = Vec::with_capacity(config.epochs);
    let n_params = model.params.len();
    let weight_spans = model.arch.weight_spans(model.input_dim, model.class_count);
    let use_dropout =
        config.dropout_rate > 0.0 && matches!(model.arch, Architecture::Mlp { .. });
    let mut velocity = vec![0.0; n_params];
    let mut grad = vec![0.0; n_params];
    let mut indices: Vec<usize> = (0..data.len()).collect();
    let mut iteration = 0usize;
    for _ in 0..config.epochs {
        indices.shuffle(rng);
        let mut epoch_loss = 0.0;
        for batch in indices.chunks(config.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut batch_total = 0.0;
            for &idx in batch {
                let (x, y) = &data[idx];
                let mask: Option<Vec<f64>> = if use_dropout {
                    let Architecture::Mlp { hidden_units: h } = model.arch else {
                        unreachable!()
                    };
                    let keep = 1.0 - config.dropout_rate;
                    Some(
                        (0..h)
                            .map(|_| {
                                if rng.random::<f64>() < config.dropout_rate {
                                    0.0
                                } else {
                                    1.0 / keep
                                }
                            })
                            .collect(),
                    )
                } else {
                    None
                };
                batch_total += sample_loss_and_grad(&model, x, y, mask.as_deref(), &mut grad);
            }
            let lr = clr_learning_rate(iteration, config);
            let mean_loss = batch_total / batch.len() as f64;
            if !mean_loss.is_finite() {
                return Err(Error::Divergence { iteration, lr });
            }
            epoch_loss += batch_total;
            let scale = 1.0 / batch.len() as f64;
            for g in grad.iter_mut() {
                *g *= scale;
            }
            if config.weight_decay > 0.0 {
                for span in &weight_spans {
                    for i in span.clone() {
                        grad[i] += config.weight_decay * model.params[i];
                    }
                }
            }
            if config.momentum > 0.0 {
                for ((v, p), g) in velocity.iter_mut().zip(&mut model.params).zip(&grad) {
                    *v = config.momentum * *v - lr * g;
                    *p += *v;
                }
            } else {
                for (p, g) in model.params.iter_mut().zip(&grad) {
                    *p -= lr * g;
                }
            }
            iteration += 1;
        }
        history.push(epoch_loss / data.len() as f64);
    }
    Ok((model, history))
}

/// Compare analytic gradients with central finite differences over every
/// parameter; returns the worst relative error. Dropout and weight decay are
/// excluded: this checks the data-loss gradient only.
pub fn gradient_check(model: &ClassifierModel, batch: &[TrainingPair]) -> f64 {
    assert!(!batch.is_empty(), "gradient check needs at least one sample");
    let n = batch.len() as f64;
    let mut analytic = vec![0.0; model.params.len()];
    for (x, y) in batch {
        sample_loss_and_grad(model, x, y, None, &mut analytic);
    }
    for g in &mut analytic {
        *g /= n;
    }
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for (i, a) in analytic.iter().enumerate() {
        let orig = probe.params[i];
        probe.params[i] = orig + FD_STEP;
        let plus = batch_loss(&probe, batch);
        probe.params[i] = orig - FD_STEP;
        let minus = batch_loss(&probe, batch);
        probe.params[i] = orig;
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    worst
}

/// Forward every input in order.
pub fn predict_batch(model: &ClassifierModel, features: &[Vec<f64>]) -> Result<Vec<ProbabilityVector>> {
    features.iter().map(|x| model.forward(x)).collect()
}

/// A training procedure that ensembles and pseudo-labeling can re-run on
/// different data subsets. Closures of the matching shape implement it.
pub trait Trainer {
    fn fit(&self, data: &[TrainingPair], rng: &mut Prng) -> Result<ClassifierModel>;
}

impl<F> Trainer for F
where
    F: Fn(&[TrainingPair], &mut Prng) -> Result<ClassifierModel>,
{
    fn fit(&self, data: &[TrainingPair], rng: &mut Prng) -> Result<ClassifierModel> {
        self(data, rng)
    }
}

/// The standard trainer: seeded initialization followed by [`train`].
#[derive(Debug, Clone)]
pub struct SgdTrainer {
    pub arch: Architecture,
    pub input_dim: usize,
    pub class_count: usize,
    pub config: TrainConfig,
}

impl Trainer for SgdTrainer {
    fn fit(&self, data: &[TrainingPair], rng: &mut Prng) -> Result<ClassifierModel> {
        let model = ClassifierModel::new(self.arch, self.input_dim, self.class_count, rng)?;
        let (trained, _) = train(model, data, &self.config, rng)?;
        Ok(trained)
    }
}

const ASCM_MAGIC: &[u8; 4] = b"ASCM";
const ASCM_VERSION: u16 = 1;
const ASCM_HEADER_LEN: usize = 19;

/// Serialize a model to an ASCM file; bytes are deterministic for a model.
pub fn write_model(model: &ClassifierModel, path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(ASCM_HEADER_LEN + model.params.len() * 8);
    bytes.extend_from_slice(ASCM_MAGIC);
    bytes.extend_from_slice(&ASCM_VERSION.to_le_bytes());
    let (tag, hidden) = match model.arch {
        Architecture::Linear => (0u8, 0u32),
        Architecture::Mlp { hidden_units } => (1u8, hidden_units as u32),
    };
    bytes.push(tag);
    bytes.extend_from_slice(&(model.input_dim as u32).to_le_bytes());
    bytes.extend_from_slice(&(model.class_count as u32).to_le_bytes());
    bytes.extend_from_slice(&hidden.to_le_bytes());
    for p in &model.params {
        bytes.extend_from_slice(&p.to_le_bytes());
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Read a model written by [`write_model`].
pub fn read_model(path: &Path) -> Result<ClassifierModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 4 || &bytes[0..4] != ASCM_MAGIC {
        return Err(Error::format(path, 0, "bad magic, expected \"ASCM\""));
    }
    if bytes.len() < ASCM_HEADER_LEN {
        return Err(Error::format(
            path,
            bytes.len() as u64,
            format!("truncated header: {} bytes, need {ASCM_HEADER_LEN}", bytes.len()),
        ));
    }
    let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
    if version != ASCM_VERSION {
        return Err(Error::format(
            path,
            4,
            format!("unsupported version {version}, expected {ASCM_VERSION}"),
        ));
    }
    let input_dim = u32::from_le_bytes(bytes[7..11].try_into().unwrap()) as usize;
    let class_count = u32::from_le_bytes(bytes[11..15].try_into().unwrap()) as usize;
    let hidden = u32::from_le_bytes(bytes[15..19].try_into().unwrap()) as usize;
    let arch = match bytes[6] {
        0 => {
            if hidden != 0 {
                return Err(Error::format(path, 15, "linear models must declare hidden width 0"));
            }
            Architecture::Linear
        }
        1 => {
            if hidden == 0 {
                return Err(Error::format(path, 15, "mlp models must declare hidden width >= 1"));
            }
            Architecture::Mlp { hidden_units: hidden }
        }
        tag => {
            return Err(Error::format(
                path,
                6,
                format!("unknown architecture tag {tag}"),
            ))
        }
    };
    if input_dim == 0 {
        return Err(Error::format(path, 7, "input dimension must be at least 1"));
    }
    if class_count < 2 {
        return Err(Error::format(path, 11, "class count must be at least 2"));
    }
    let expected = ASCM_HEADER_LEN + arch.param_count(input_dim, class_count) * 8;
    if bytes.len() != expected {
        let (offset, what) = if bytes.len() < expected {
            (bytes.len() as u64, "truncated parameters")
        } else {
            (expected as u64, "trailing bytes after parameters")
        };
        return Err(Error::format(
            path,
            offset,
            format!("{what}: expected {expected} bytes, found {}", bytes.len()),
        ));
    }
    let mut params = Vec::with_capacity(arch.param_count(input_dim, class_count));
    for i in 0..arch.param_count(input_dim, class_count) {
        let offset = ASCM_HEADER_LEN + i * 8;
        let v = f64::from_le_bytes(bytes[offset..offset + 8].try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::format(path, offset as u64, "non-finite parameter"));
        }
        params.push(v);
    }
    ClassifierModel::from_params(arch, input_dim, class_count, params)
}

/// One probability CSV row: a segment id and its per-class probabilities.
pub type ProbabilityRow = (String, Vec<f64>);

/// Write per-segment class probabilities as CSV with header
/// `segment_id,p_<class0>,...` in vocabulary order.
pub fn write_probability_csv(
    path: &Path,
    class_names: &[String],
    rows: &[ProbabilityRow],
) -> Result<()> {
    if class_names.is_empty() {
        return Err(Error::invalid("probability files need at least one class"));
    }
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::manifest(path, e.to_string()))?;
    let mut header = vec!["segment_id".to_string()];
    header.extend(class_names.iter().map(|c| format!("p_{c}")));
    writer
        .write_record(&header)
        .map_err(|e| Error::manifest(path, e.to_string()))?;
    for (id, probs) in rows {
        if probs.len() != class_names.len() {
            return Err(Error::shape(format!(
                "segment {id} has {} probabilities for {} classes",
                probs.len(),
                class_names.len()
            )));
        }
        ProbabilityVector::from_values(probs.clone())?;
        let mut record = vec![id.clone()];
        record.extend(probs.iter().map(|p| p.to_string()));
        writer
            .write_record(&record)
            .map_err(|e| Error::manifest(path, e.to_string()))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Read a file written by [`write_probability_csv`]: the class names from
/// the header and one probability row per segment, in file order.
pub fn read_probability_csv(path: &Path) -> Result<(Vec<String>, Vec<ProbabilityRow>)> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::manifest(path, e.to_string()))?;
    let header = reader
        .headers()
        .map_err(|e| Error::manifest(path, e.to_string()))?
        .clone();
    let mut columns = header.iter();
    if columns.next() != Some("segment_id") {
        return Err(Error::manifest(path, "first column must be segment_id".to_string()));
    }
    let mut class_names = Vec::new();
    for col in columns {
        match col.strip_prefix("p_") {
            Some(name) if !name.is_empty() => class_names.push(name.to_string()),
            _ => {
                return Err(Error::manifest(
                    path,
                    format!("probability column {col} must be named p_<class>"),
                ));
            }
        }
    }
    if class_names.is_empty() {
        return Err(Error::manifest(path, "no probability columns".to_string()));
    }
    let mut rows = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::manifest(path, e.to_string()))?;
        let id = record.get(0).unwrap_or("").to_string();
        if id.is_empty() {
            return Err(Error::manifest(path, "empty segment_id".to_string()));
        }
        if !seen.insert(id.clone()) {
            return Err(Error::manifest(path, format!("duplicate segment_id {id}")));
        }
        let mut probs = Vec::with_capacity(class_names.len());
        for field in record.iter().skip(1) {
            let p: f64 = field
                .parse()
                .map_err(|e| Error::manifest(path, format!("bad probability {field}: {e}")))?;
            probs.push(p);
        }
        if probs.len() != class_names.len() {
            return Err(Error::manifest(
                path,
                format!("segment {id} has {} probabilities for {} classes", probs.len(), class_names.len()),
            ));
        }
        ProbabilityVector::from_values(probs.clone())
            .map_err(|e| Error::manifest(path, format!("segment {id}: {e}")))?;
        rows.push((id, probs));
    }
    Ok((class_names, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derived_rng;
    use approx::assert_abs_diff_eq;

    fn zero_model(arch: Architecture, p: usize, c: usize) -> ClassifierModel {
        let count = arch.param_count(p, c);
        ClassifierModel::from_params(arch, p, c, vec![0.0; count]).unwrap()
    }

    fn random_batch(p: usize, c: usize, n: usize, rng: &mut Prng) -> Vec<(Vec<f64>, Vec<f64>)> {
        (0..n)
            .map(|_| {
                let x: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
                let class = rng.random_range(0..c);
                let mut y = vec![0.0; c];
                y[class] = 1.0;
                (x, y)
            })
            .collect()
    }

    #[test]
    fn zero_model_predicts_uniformly() {
        let m = zero_model(Architecture::Linear, 4, 5);
        let p = m.forward(&[1.0, -2.0, 0.5, 3.0]).unwrap();
        for v in p.values() {
            assert_abs_diff_eq!(*v, 0.2, epsilon = 1e-12);
        }
    }

    #[test]
    fn forward_output_is_a_distribution() {
        let mut rng = derived_rng(1, "model");
        for arch in [Architecture::Linear, Architecture::Mlp { hidden_units: 6 }] {
            let m = ClassifierModel::new(arch, 7, 3, &mut rng).unwrap();
            for _ in 0..20 {
                let x: Vec<f64> = (0..7).map(|_| rng.random_range(-5.0..5.0)).collect();
                let p = m.forward(&x).unwrap();
                let sum: f64 = p.values().iter().sum();
                assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-9);
                assert!(p.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
        }
    }

    #[test]
    fn confident_logits_example() {
        // Zero weights, biases [10, 0]: logits are [10, 0] for any input.
        let mut params = vec![0.0; Architecture::Linear.param_count(2, 2)];
        params[4] = 10.0;
        let m = ClassifierModel::from_params(Architecture::Linear, 2, 2, params).unwrap();
        let p = m.forward(&[0.3, -0.7]).unwrap();
        assert!(p.values()[0] > 0.9999);
        assert_abs_diff_eq!(p.values()[0], 1.0 / (1.0 + (-10.0f64).exp()), epsilon = 1e-12);
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let mut rng = derived_rng(2, "model");
        let m = ClassifierModel::new(Architecture::Linear, 3, 4, &mut rng).unwrap();
        let x = [0.4, -1.0, 2.0];
        let base = m.forward(&x).unwrap();
        let mut shifted_params = m.params().to_vec();
        for c in 0..4 {
            shifted_params[3 * 4 + c] += 123.456;
        }
        let shifted =
            ClassifierModel::from_params(Architecture::Linear, 3, 4, shifted_params).unwrap();
        let out = shifted.forward(&x).unwrap();
        for (a, b) in base.values().iter().zip(out.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn forward_rejects_wrong_dimension() {
        let m = zero_model(Architecture::Linear, 3, 2);
        assert!(m.forward(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn cross_entropy_of_uniform_is_log_c() {
        let pred = ProbabilityVector::from_values(vec![0.25; 4]).unwrap();
        let ce = cross_entropy(&pred, &[0.0, 0.5, 0.5, 0.0]);
        assert_abs_diff_eq!(ce, 4.0f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn cross_entropy_of_perfect_prediction_is_tiny() {
        let pred = ProbabilityVector::from_values(vec![0.0, 1.0, 0.0]).unwrap();
        assert!(cross_entropy(&pred, &[0.0, 1.0, 0.0]) < 1e-11);
    }

    #[test]
    fn cross_entropy_is_linear_in_target() {
        let pred = ProbabilityVector::from_values(vec![0.7, 0.2, 0.1]).unwrap();
        let y_i = [1.0, 0.0, 0.0];
        let y_j = [0.0, 0.0, 1.0];
        let mixed = [0.5, 0.0, 0.5];
        let lhs = cross_entropy(&pred, &mixed);
        let rhs = 0.5 * cross_entropy(&pred, &y_i) + 0.5 * cross_entropy(&pred, &y_j);
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12);
    }

    fn clr_config(base: f64, max: f64, step: usize) -> TrainConfig {
        TrainConfig {
            base_lr: base,
            max_lr: max,
            clr_step_size: step,
            clr_enabled: true,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn clr_hits_exact_anchors() {
        let config = clr_config(0.001, 0.1, 25);
        assert_eq!(clr_learning_rate(0, &config), 0.001);
        assert_eq!(clr_learning_rate(25, &config), 0.1);
        assert_eq!(clr_learning_rate(50, &config), 0.001);
    }

    #[test]
    fn clr_is_periodic_and_bounded() {
        let config = clr_config(0.01, 0.5, 8);
        for t in 0..16 * 10 {
            let lr = clr_learning_rate(t, &config);
            assert!((0.01 - 1e-15..=0.5 + 1e-15).contains(&lr));
            assert_abs_diff_eq!(lr, clr_learning_rate(t + 16, &config), epsilon = 1e-12);
        }
    }

    #[test]
    fn disabled_clr_returns_base() {
        let config = TrainConfig {
            clr_enabled: false,
            base_lr: 0.03,
            max_lr: 0.3,
            ..TrainConfig::default()
        };
        for t in [0, 7, 100, 9999] {
            assert_eq!(clr_learning_rate(t, &config), 0.03);
        }
    }

    fn separable_data() -> Vec<(Vec<f64>, Vec<f64>)> {
        let mut data = Vec::new();
        for i in 0..5 {
            data.push((vec![-3.0 + 0.5 * i as f64], vec![1.0, 0.0]));
            data.push((vec![1.0 + 0.5 * i as f64], vec![0.0, 1.0]));
        }
        data
    }

    #[test]
    fn linear_model_separates_separable_data() {
        let data = separable_data();
        let mut rng = derived_rng(3, "train");
        let model = ClassifierModel::new(Architecture::Linear, 1, 2, &mut rng).unwrap();
        let config = TrainConfig {
            epochs: 200,
            batch_size: 10,
            base_lr: 0.5,
            max_lr: 0.5,
            ..TrainConfig::default()
        };
        let (trained, history) = train(model, &data, &config, &mut rng).unwrap();
        assert_eq!(history.len(), 200);
        let correct = data
            .iter()
            .filter(|(x, y)| {
                let p = trained.forward(x).unwrap();
                y[p.argmax()] == 1.0
            })
            .count();
        assert_eq!(correct, data.len());
    }

    #[test]
    fn zero_epochs_is_identity() {
        let data = separable_data();
        let mut rng = derived_rng(4, "train");
        let model = ClassifierModel::new(Architecture::Linear, 1, 2, &mut rng).unwrap();
        let before = model.params().to_vec();
        let config = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let (after, history) = train(model, &data, &config, &mut rng).unwrap();
        assert!(history.is_empty());
        assert_eq!(after.params(), before.as_slice());
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let mut rng = derived_rng(5, "train");
        let data = random_batch(6, 3, 40, &mut rng);
        let config = TrainConfig {
            epochs: 10,
            batch_size: 8,
            dropout_rate: 0.3,
            momentum: 0.5,
            clr_enabled: true,
            clr_step_size: 4,
            ..TrainConfig::default()
        };
        let run = |seed: u64| {
            let mut rng = derived_rng(seed, "train-run");
            let model =
                ClassifierModel::new(Architecture::Mlp { hidden_units: 5 }, 6, 3, &mut rng)
                    .unwrap();
            train(model, &data, &config, &mut rng).unwrap().0
        };
        let a = run(11);
        let b = run(11);
        for (x, y) in a.params().iter().zip(b.params()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn full_batch_descent_never_increases_loss() {
        let mut rng = derived_rng(6, "train");
        let data = random_batch(2, 2, 8, &mut rng);
        let model = ClassifierModel::new(Architecture::Linear, 2, 2, &mut rng).unwrap();
        let config = TrainConfig {
            epochs: 50,
            batch_size: 8,
            base_lr: 1e-3,
            max_lr: 1e-3,
            ..TrainConfig::default()
        };
        let (_, history) = train(model, &data, &config, &mut rng).unwrap();
        for w in history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "loss rose: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn runaway_learning_rate_reports_divergence() {
        // An oversized step combined with ℓ2 decay multiplies the weights by
        // (1 − lr·wd) every update, which overflows to inf within a few
        // hundred iterations and turns the next forward pass non-finite.
        let data = vec![
            (vec![1.0], vec![1.0, 0.0]),
            (vec![1.0], vec![0.0, 1.0]),
        ];
        let mut rng = derived_rng(7, "train");
        let model = ClassifierModel::new(Architecture::Linear, 1, 2, &mut rng).unwrap();
        let config = TrainConfig {
            epochs: 2000,
            batch_size: 2,
            base_lr: 10.0,
            max_lr: 10.0,
            weight_decay: 1.0,
            ..TrainConfig::default()
        };
        match train(model, &data, &config, &mut rng) {
            Err(Error::Divergence { iteration, lr }) => {
                assert!(lr > 0.0);
                assert!(iteration > 0);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn gradient_check_linear_and_mlp() {
        let mut rng = derived_rng(8, "gradcheck");
        for arch in [Architecture::Linear, Architecture::Mlp { hidden_units: 8 }] {
            let model = ClassifierModel::new(arch, 10, 4, &mut rng).unwrap();
            let batch = random_batch(10, 4, 4, &mut rng);
            let err = gradient_check(&model, &batch);
            assert!(err < 1e-4, "{arch:?}: relative error {err}");
        }
    }

    #[test]
    fn gradient_check_degenerate_zero_model() {
        let model = zero_model(Architecture::Linear, 3, 2);
        let batch = vec![(vec![0.0, 0.0, 0.0], vec![0.5, 0.5])];
        let err = gradient_check(&model, &batch);
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn predict_batch_contracts() {
        let mut rng = derived_rng(9, "model");
        let m = ClassifierModel::new(Architecture::Linear, 2, 3, &mut rng).unwrap();
        assert!(predict_batch(&m, &[]).unwrap().is_empty());
        let xs = vec![vec![1.0, 2.0], vec![-1.0, 0.5], vec![0.0, 0.0]];
        let out = predict_batch(&m, &xs).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out[1], m.forward(&xs[1]).unwrap());
        let permuted = vec![xs[2].clone(), xs[0].clone(), xs[1].clone()];
        let out_p = predict_batch(&m, &permuted).unwrap();
        assert_eq!(out_p[0], out[2]);
        assert_eq!(out_p[1], out[0]);
        assert_eq!(out_p[2], out[1]);
    }

    #[test]
    fn argmax_ties_go_to_lowest_index() {
        let p = ProbabilityVector::from_values(vec![0.25, 0.25, 0.25, 0.25]).unwrap();
        assert_eq!(p.argmax(), 0);
        let q = ProbabilityVector::from_values(vec![0.2, 0.4, 0.4]).unwrap();
        assert_eq!(q.argmax(), 1);
    }

    #[test]
    fn model_round_trips_through_ascm() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = derived_rng(10, "io");
        for arch in [Architecture::Linear, Architecture::Mlp { hidden_units: 3 }] {
            let m = ClassifierModel::new(arch, 5, 3, &mut rng).unwrap();
            let path = dir.path().join("m.ascm");
            write_model(&m, &path).unwrap();
            let back = read_model(&path).unwrap();
            assert_eq!(m, back);
            for (a, b) in m.params().iter().zip(back.params()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn model_bytes_are_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = derived_rng(11, "io");
        let m = ClassifierModel::new(Architecture::Linear, 4, 2, &mut rng).unwrap();
        let a = dir.path().join("a.ascm");
        let b = dir.path().join("b.ascm");
        write_model(&m, &a).unwrap();
        write_model(&m, &b).unwrap();
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }

    #[test]
    fn malformed_model_files_name_offsets() {
        let dir = tempfile::tempdir().unwrap();
        let bad_magic = dir.path().join("bad.ascm");
        std::fs::write(&bad_magic, b"NOPE").unwrap();
        match read_model(&bad_magic) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("expected format error, got {other:?}"),
        }

        let mut rng = derived_rng(12, "io");
        let m = ClassifierModel::new(Architecture::Linear, 2, 2, &mut rng).unwrap();
        let path = dir.path().join("m.ascm");
        write_model(&m, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 3);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_model(&path), Err(Error::Format { .. })));

        write_model(&m, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.push(0);
        std::fs::write(&path, &bytes).unwrap();
        match read_model(&path) {
            Err(Error::Format { reason, .. }) => assert!(reason.contains("trailing")),
            other => panic!("expected format error, got {other:?}"),
        }

        write_model(&m, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[6] = 9;
        std::fs::write(&path, &bytes).unwrap();
        match read_model(&path) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 6),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn config_validation_rejects_bad_settings() {
        let mut config = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(config.validate().is_err());
        config = TrainConfig {
            max_lr: 0.001,
            base_lr: 0.01,
            ..TrainConfig::default()
        };
        assert!(config.validate().is_err());
        config = TrainConfig {
            dropout_rate: 1.0,
            ..TrainConfig::default()
        };
        assert!(config.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn sgd_trainer_and_closures_both_fit() {
        let data = separable_data();
        let trainer = SgdTrainer {
            arch: Architecture::Linear,
            input_dim: 1,
            class_count: 2,
            config: TrainConfig {
                epochs: 100,
                batch_size: 10,
                base_lr: 0.5,
                max_lr: 0.5,
                ..TrainConfig::default()
            },
        };
        let mut rng = derived_rng(13, "trainer");
        let model = trainer.fit(&data, &mut rng).unwrap();
        assert_eq!(model.class_count(), 2);

        let constant = |_: &[(Vec<f64>, Vec<f64>)], _: &mut Prng| {
            let mut params = vec![0.0; Architecture::Linear.param_count(1, 2)];
            params[2] = 5.0;
            ClassifierModel::from_params(Architecture::Linear, 1, 2, params)
        };
        let mut rng = derived_rng(14, "trainer");
        let fixed = Trainer::fit(&constant, &data, &mut rng).unwrap();
        assert_eq!(fixed.forward(&[9.9]).unwrap().argmax(), 0);
    }

    #[test]
    fn probability_csv_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("probs.csv");
        let classes = vec!["bus".to_string(), "park".to_string(), "tram".to_string()];
        let rows = vec![
            ("a1".to_string(), vec![0.1, 0.2, 0.7]),
            ("a2".to_string(), vec![1.0 / 3.0, 1.0 / 3.0, 1.0 - 2.0 / 3.0]),
            ("a3".to_string(), vec![1.0, 0.0, 0.0]),
        ];
        write_probability_csv(&path, &classes, &rows).unwrap();
        let (read_classes, read_rows) = read_probability_csv(&path).unwrap();
        assert_eq!(read_classes, classes);
        assert_eq!(read_rows.len(), rows.len());
        for ((id, probs), (rid, rprobs)) in rows.iter().zip(&read_rows) {
            assert_eq!(id, rid);
            for (p, r) in probs.iter().zip(rprobs) {
                assert_eq!(p.to_bits(), r.to_bits());
            }
        }
    }

    #[test]
    fn probability_csv_rejects_bad_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("probs.csv");
        let classes = vec!["a".to_string(), "b".to_string()];
        let short = vec![("x".to_string(), vec![1.0])];
        assert!(write_probability_csv(&path, &classes, &short).is_err());
        let off_simplex = vec![("x".to_string(), vec![0.6, 0.6])];
        assert!(write_probability_csv(&path, &classes, &off_simplex).is_err());
        assert!(write_probability_csv(&path, &[], &[]).is_err());
    }

    #[test]
    fn probability_csv_read_validates_contents() {
        let dir = tempfile::tempdir().unwrap();
        let write = |name: &str, body: &str| {
            let path = dir.path().join(name);
            std::fs::write(&path, body).unwrap();
            path
        };
        let bad_header = write("h.csv", "segment_id,bus\nx,1.0\n");
        assert!(read_probability_csv(&bad_header).is_err());
        let bad_first = write("f.csv", "id,p_bus\nx,1.0\n");
        assert!(read_probability_csv(&bad_first).is_err());
        let duplicate = write("d.csv", "segment_id,p_bus,p_park\nx,0.5,0.5\nx,0.5,0.5\n");
        assert!(read_probability_csv(&duplicate).is_err());
        let off_simplex = write("s.csv", "segment_id,p_bus,p_park\nx,0.9,0.9\n");
        assert!(read_probability_csv(&off_simplex).is_err());
        let not_a_number = write("n.csv", "segment_id,p_bus,p_park\nx,0.5,oops\n");
        assert!(read_probability_csv(&not_a_number).is_err());
        let good = write("g.csv", "segment_id,p_bus,p_park\nx,0.25,0.75\n");
        let (classes, rows) = read_probability_csv(&good).unwrap();
        assert_eq!(classes, vec!["bus".to_string(), "park".to_string()]);
        assert_eq!(rows, vec![("x".to_string(), vec![0.25, 0.75])]);
    }
}
