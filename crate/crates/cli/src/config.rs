//! Flat `key = value` run configuration shared by all pipeline subcommands.
//!
//! A run is described by a [`RunConfig`]: defaults, optionally overridden by
//! a config file, then by `--set key=value` flags, then by `--seed`. Every
//! run echoes the fully resolved settings to `resolved.cfg` in its output
//! directory, and that echo parses back into the identical config.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use asc_core::{Architecture, EraseConfig, TrainConfig};
use clap::Args;

/// Preprocessing applied to each standardized feature matrix before it is
/// flattened into a classifier input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Row-major flatten of the full matrix.
    Raw,
    /// Per-bin mean over time, collapsing the matrix to one value per bin.
    TemporalAverage,
    /// Per-bin mean subtraction, then a row-major flatten.
    BackgroundSubtract,
}

impl Variant {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(Self::Raw),
            "tavg" => Ok(Self::TemporalAverage),
            "bgsub" => Ok(Self::BackgroundSubtract),
            other => bail!("unknown variant {other} (expected raw, tavg, or bgsub)"),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Raw => "raw",
            Self::TemporalAverage => "tavg",
            Self::BackgroundSubtract => "bgsub",
        }
    }
}

/// Every knob of a pipeline run, with one flat key per field.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub arch: String,
    pub hidden_units: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub max_lr: f64,
    pub clr_step_size: usize,
    pub clr: bool,
    pub mixup: bool,
    pub mixup_alpha: f64,
    pub erase: bool,
    pub erase_probability: f64,
    pub erase_area_low: f64,
    pub erase_area_high: f64,
    pub erase_aspect_low: f64,
    pub erase_aspect_high: f64,
    pub erase_fill: f64,
    pub variant: Variant,
    pub ssl_threshold: f64,
    pub ssl_rounds: usize,
    pub folds: usize,
    pub weight_decay: f64,
    pub dropout: f64,
    pub momentum: f64,
    pub window: usize,
    pub hop: usize,
    pub components: usize,
    pub candidates: usize,
    pub dev_target: usize,
    pub eval_target: usize,
    pub eval_ratio: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            arch: "linear".to_string(),
            hidden_units: 16,
            epochs: 30,
            batch_size: 32,
            base_lr: 0.01,
            max_lr: 0.1,
            clr_step_size: 100,
            clr: false,
            mixup: false,
            mixup_alpha: 0.2,
            erase: false,
            erase_probability: 0.5,
            erase_area_low: 0.02,
            erase_area_high: 0.33,
            erase_aspect_low: 0.3,
            erase_aspect_high: 3.3,
            erase_fill: 0.0,
            variant: Variant::Raw,
            ssl_threshold: 0.5,
            ssl_rounds: 1,
            folds: 5,
            weight_decay: 0.0,
            dropout: 0.0,
            momentum: 0.0,
            window: 50,
            hop: 25,
            components: 2,
            candidates: 100,
            dev_target: 0,
            eval_target: 0,
            eval_ratio: 0.5,
        }
    }
}

fn parse_value<T>(key: &str, value: &str) -> Result<T>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| anyhow::anyhow!("config key {key}: bad value {value:?}: {e}"))
}

impl RunConfig {
    /// Set one key. Unknown keys are rejected by name; the `version` key
    /// echoed into `resolved.cfg` is accepted and ignored on re-read.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse_value(key, value)?,
            "arch" => {
                if value != "linear" && value != "mlp" {
                    bail!("config key arch: expected linear or mlp, got {value:?}");
                }
                self.arch = value.to_string();
            }
            "hidden_units" => self.hidden_units = parse_value(key, value)?,
            "epochs" => self.epochs = parse_value(key, value)?,
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "base_lr" => self.base_lr = parse_value(key, value)?,
            "max_lr" => self.max_lr = parse_value(key, value)?,
            "clr_step_size" => self.clr_step_size = parse_value(key, value)?,
            "clr" => self.clr = parse_value(key, value)?,
            "mixup" => self.mixup = parse_value(key, value)?,
            "mixup_alpha" => self.mixup_alpha = parse_value(key, value)?,
            "erase" => self.erase = parse_value(key, value)?,
            "erase_probability" => self.erase_probability = parse_value(key, value)?,
            "erase_area_low" => self.erase_area_low = parse_value(key, value)?,
            "erase_area_high" => self.erase_area_high = parse_value(key, value)?,
            "erase_aspect_low" => self.erase_aspect_low = parse_value(key, value)?,
            "erase_aspect_high" => self.erase_aspect_high = parse_value(key, value)?,
            "erase_fill" => self.erase_fill = parse_value(key, value)?,
            "variant" => self.variant = Variant::parse(value)?,
            "ssl_threshold" => self.ssl_threshold = parse_value(key, value)?,
            "ssl_rounds" => self.ssl_rounds = parse_value(key, value)?,
            "folds" => self.folds = parse_value(key, value)?,
            "weight_decay" => self.weight_decay = parse_value(key, value)?,
            "dropout" => self.dropout = parse_value(key, value)?,
            "momentum" => self.momentum = parse_value(key, value)?,
            "window" => self.window = parse_value(key, value)?,
            "hop" => self.hop = parse_value(key, value)?,
            "components" => self.components = parse_value(key, value)?,
            "candidates" => self.candidates = parse_value(key, value)?,
            "dev_target" => self.dev_target = parse_value(key, value)?,
            "eval_target" => self.eval_target = parse_value(key, value)?,
            "eval_ratio" => self.eval_ratio = parse_value(key, value)?,
            "version" => {}
            other => bail!("unknown config key {other}"),
        }
        Ok(())
    }

    /// Apply a config file: one `key = value` per line, `#` comments and
    /// blank lines skipped.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        for (number, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').with_context(|| {
                format!("{}:{}: expected key = value", path.display(), number + 1)
            })?;
            self.set(key.trim(), value.trim())
                .with_context(|| format!("{}:{}", path.display(), number + 1))?;
        }
        Ok(())
    }

    pub fn architecture(&self) -> Result<Architecture> {
        match self.arch.as_str() {
            "linear" => Ok(Architecture::Linear),
            "mlp" => Ok(Architecture::Mlp {
                hidden_units: self.hidden_units,
            }),
            other => bail!("unknown arch {other}"),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            base_lr: self.base_lr,
            max_lr: self.max_lr,
            clr_step_size: self.clr_step_size,
            clr_enabled: self.clr,
            weight_decay: self.weight_decay,
            dropout_rate: self.dropout,
            momentum: self.momentum,
            seed: self.seed,
        }
    }

    pub fn erase_config(&self) -> EraseConfig {
        EraseConfig {
            probability: self.erase_probability,
            area_low: self.erase_area_low,
            area_high: self.erase_area_high,
            aspect_low: self.erase_aspect_low,
            aspect_high: self.erase_aspect_high,
            fill_value: self.erase_fill,
            seed: self.seed,
        }
    }

    /// Check the settings that training-style commands rely on.
    pub fn validate(&self) -> Result<()> {
        self.architecture()?;
        self.train_config().validate()?;
        if self.erase {
            self.erase_config().validate()?;
        }
        if self.mixup && (self.mixup_alpha.is_nan() || self.mixup_alpha <= 0.0) {
            bail!("mixup_alpha must be positive");
        }
        Ok(())
    }

    /// The fully resolved settings as config-file text, one key per line in
    /// a fixed order, plus the tool version.
    pub fn resolved(&self) -> String {
        let mut out = String::new();
        let mut line = |key: &str, value: String| {
            writeln!(out, "{key} = {value}").expect("string write");
        };
        line("version", env!("CARGO_PKG_VERSION").to_string());
        line("seed", self.seed.to_string());
        line("arch", self.arch.clone());
        line("hidden_units", self.hidden_units.to_string());
        line("epochs", self.epochs.to_string());
        line("batch_size", self.batch_size.to_string());
        line("base_lr", self.base_lr.to_string());
        line("max_lr", self.max_lr.to_string());
        line("clr_step_size", self.clr_step_size.to_string());
        line("clr", self.clr.to_string());
        line("mixup", self.mixup.to_string());
        line("mixup_alpha", self.mixup_alpha.to_string());
        line("erase", self.erase.to_string());
        line("erase_probability", self.erase_probability.to_string());
        line("erase_area_low", self.erase_area_low.to_string());
        line("erase_area_high", self.erase_area_high.to_string());
        line("erase_aspect_low", self.erase_aspect_low.to_string());
        line("erase_aspect_high", self.erase_aspect_high.to_string());
        line("erase_fill", self.erase_fill.to_string());
        line("variant", self.variant.as_str().to_string());
        line("ssl_threshold", self.ssl_threshold.to_string());
        line("ssl_rounds", self.ssl_rounds.to_string());
        line("folds", self.folds.to_string());
        line("weight_decay", self.weight_decay.to_string());
        line("dropout", self.dropout.to_string());
        line("momentum", self.momentum.to_string());
        line("window", self.window.to_string());
        line("hop", self.hop.to_string());
        line("components", self.components.to_string());
        line("candidates", self.candidates.to_string());
        line("dev_target", self.dev_target.to_string());
        line("eval_target", self.eval_target.to_string());
        line("eval_ratio", self.eval_ratio.to_string());
        out
    }

    /// Write `resolved.cfg` into the run's output directory.
    pub fn write_resolved(&self, dir: &Path) -> Result<()> {
        let path = dir.join("resolved.cfg");
        std::fs::write(&path, self.resolved())
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

/// Config sources shared by the pipeline subcommands.
#[derive(Args, Debug)]
pub struct ConfigArgs {
    /// Flat `key = value` configuration file.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Override one configuration key, e.g. --set epochs=50. Repeatable;
    /// applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,

    /// Root seed, overriding both the default and the config file.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ConfigArgs {
    /// Defaults, then file, then `--set` pairs in order, then `--seed`.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut config = RunConfig::default();
        if let Some(path) = &self.config {
            config.apply_file(path)?;
        }
        for pair in &self.set {
            let (key, value) = pair
                .split_once('=')
                .with_context(|| format!("--set {pair}: expected KEY=VALUE"))?;
            config.set(key.trim(), value.trim())?;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        config.validate()?;
        Ok(config)
    }
}
