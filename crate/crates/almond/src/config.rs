//! `key = value` configuration files and the settings they populate.
//!
//! Blank lines and `#` comments are ignored. The same keys are used by the
//! config file, by command-line overrides and by checkpoint headers.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use almond_core::almondnet::{ModelConfig, Variant};
use almond_core::imageproc::{FeedStage, PreprocessParams};
use almond_core::nn::Optimizer;

use crate::error::{Error, IoContext, Result};

/// Ordered `(key, value)` pairs with their source line numbers.
pub fn parse_pairs(text: &str, origin: &Path) -> Result<Vec<(String, String, usize)>> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: origin.into(),
            line: i + 1,
            message: format!("expected `key = value`, found {line:?}"),
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Parse { path: origin.into(), line: i + 1, message: "empty key".into() });
        }
        pairs.push((key.to_string(), value.trim().to_string(), i + 1));
    }
    Ok(pairs)
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("`{key}`: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("`{key}`: expected true or false, found {value:?}"))),
    }
}

/// Sets one `model.*` key. Returns `false` for keys outside that namespace.
pub fn apply_model_key(m: &mut ModelConfig, key: &str, value: &str) -> Result<bool> {
    match key {
        "model.variant" => {
            m.variant = Variant::parse(value).ok_or_else(|| Error::Config(format!("unknown model variant {value:?}")))?
        }
        "model.height" => m.input_height = parse(key, value)?,
        "model.width" => m.input_width = parse(key, value)?,
        "model.multiplier" => m.channel_multiplier = parse(key, value)?,
        "model.spatial_dropout" => m.spatial_dropout = parse(key, value)?,
        "model.dropout" => m.dropout = parse(key, value)?,
        "model.kernel" => m.kernel = parse(key, value)?,
        "model.bn_epsilon" => m.bn_epsilon = parse(key, value)?,
        "model.bn_momentum" => m.bn_momentum = parse(key, value)?,
        _ => return Ok(false),
    }
    Ok(true)
}

pub fn model_entries(m: &ModelConfig) -> Vec<(&'static str, String)> {
    vec![
        ("model.variant", m.variant.name().to_string()),
        ("model.height", m.input_height.to_string()),
        ("model.width", m.input_width.to_string()),
        ("model.multiplier", m.channel_multiplier.to_string()),
        ("model.spatial_dropout", m.spatial_dropout.to_string()),
        ("model.dropout", m.dropout.to_string()),
        ("model.kernel", m.kernel.to_string()),
        ("model.bn_epsilon", m.bn_epsilon.to_string()),
        ("model.bn_momentum", m.bn_momentum.to_string()),
    ]
}

/// Sets one preprocessing key. Returns `false` for unrelated keys.
pub fn apply_preprocess_key(p: &mut PreprocessParams, key: &str, value: &str) -> Result<bool> {
    match key {
        "feed_stage" => {
            p.feed_stage = FeedStage::parse(value).ok_or_else(|| Error::Config(format!("unknown feed stage {value:?}")))?
        }
        "blur.kernel" => p.blur_kernel = parse(key, value)?,
        "blur.sigma" => p.blur_sigma = parse(key, value)?,
        "nlm.h" => p.nlm.h = parse(key, value)?,
        "nlm.template_radius" => p.nlm.template_radius = parse(key, value)?,
        "nlm.search_radius" => p.nlm.search_radius = parse(key, value)?,
        "nlm.sigma" => p.nlm.sigma = parse(key, value)?,
        "threshold.block" => p.threshold_block = parse(key, value)?,
        "threshold.c" => p.threshold_c = parse(key, value)?,
        "canny.low" => p.canny_low = parse(key, value)?,
        "canny.high" => p.canny_high = parse(key, value)?,
        _ => return Ok(false),
    }
    Ok(true)
}

pub fn preprocess_entries(p: &PreprocessParams) -> Vec<(&'static str, String)> {
    vec![
        ("feed_stage", p.feed_stage.name().to_string()),
        ("blur.kernel", p.blur_kernel.to_string()),
        ("blur.sigma", p.blur_sigma.to_string()),
        ("nlm.h", p.nlm.h.to_string()),
        ("nlm.template_radius", p.nlm.template_radius.to_string()),
        ("nlm.search_radius", p.nlm.search_radius.to_string()),
        ("nlm.sigma", p.nlm.sigma.to_string()),
        ("threshold.block", p.threshold_block.to_string()),
        ("threshold.c", p.threshold_c.to_string()),
        ("canny.low", p.canny_low.to_string()),
        ("canny.high", p.canny_high.to_string()),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    /// `n / (k * count_c)` from the training split.
    #[default]
    Balanced,
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub preprocess: PreprocessParams,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: Optimizer,
    pub seed: u64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub class_weighting: Weighting,
    /// Store wall-clock seconds in the history file. Off by default so
    /// repeated runs write identical files.
    pub record_time: bool,
    /// Also write `epoch_NNN.ckpt` after every epoch.
    pub checkpoint_every_epoch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::mini(),
            preprocess: PreprocessParams::default(),
            epochs: 100,
            batch_size: 32,
            optimizer: Optimizer::default(),
            seed: 42,
            val_fraction: 0.2,
            test_fraction: 0.2,
            class_weighting: Weighting::Balanced,
            record_time: false,
            checkpoint_every_epoch: false,
        }
    }
}

impl TrainConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if apply_model_key(&mut self.model, key, value)? || apply_preprocess_key(&mut self.preprocess, key, value)? {
            return Ok(());
        }
        use almond_core::nn::OptimizerKind;
        match key {
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "val_fraction" => self.val_fraction = parse(key, value)?,
            "test_fraction" => self.test_fraction = parse(key, value)?,
            "learning_rate" => self.optimizer.learning_rate = parse(key, value)?,
            "optimizer" => {
                self.optimizer.kind = match value {
                    "adam" => OptimizerKind::adam(),
                    "sgd" => OptimizerKind::Sgd,
                    _ => return Err(Error::Config(format!("unknown optimizer {value:?}"))),
                }
            }
            "adam.beta1" | "adam.beta2" | "adam.epsilon" => {
                let OptimizerKind::Adam { beta1, beta2, epsilon } = &mut self.optimizer.kind else {
                    return Err(Error::Config(format!("`{key}` requires optimizer = adam (set it first)")));
                };
                let slot = match key {
                    "adam.beta1" => beta1,
                    "adam.beta2" => beta2,
                    _ => epsilon,
                };
                *slot = parse(key, value)?;
            }
            "class_weights" => {
                self.class_weighting = match value {
                    "balanced" => Weighting::Balanced,
                    "none" => Weighting::None,
                    _ => return Err(Error::Config(format!("class_weights must be balanced or none, found {value:?}"))),
                }
            }
            "record_time" => self.record_time = parse_bool(key, value)?,
            "checkpoint_every_epoch" => self.checkpoint_every_epoch = parse_bool(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be at least 1".into()));
        }
        if !(self.optimizer.learning_rate > 0.0 && self.optimizer.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        almond_core::almondnet::build_almondnet20(&self.model)?;
        Ok(())
    }

    /// Applies a config file, then `overrides` in order.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(path) = path {
            let text = fs::read_to_string(path).at(path)?;
            for (key, value, line) in parse_pairs(&text, path)? {
                cfg.set(&key, &value).map_err(|e| Error::Parse { path: path.into(), line, message: e.to_string() })?;
            }
        }
        for (key, value) in overrides {
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
