//! `key = value` run configuration files.
//!
//! ```text
//! # tiny model on synthetic data
//! preset = tiny
//! model_type = 2
//! lr = 1e-3
//! use_static = false
//! ```
//!
//! Precedence: command-line flags, then the file, then built-in defaults.
//! `preset` is applied before every other key regardless of line order.

use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::ValueEnum;
use trafficnet::model::{ModelConfig, ModelType};
use trafficnet::train::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Full-frame architecture: 8 levels, channels 64..128, decoder 128.
    Full,
    /// Three levels, channels [8, 12, 16], two dense layers of growth 4.
    Tiny,
}

impl Preset {
    fn from_str_value(s: &str) -> Result<Self> {
        <Preset as ValueEnum>::from_str(s, false).map_err(|_| anyhow!("unknown preset `{s}` (expected full or tiny)"))
    }

    pub fn model(self, model_type: ModelType) -> ModelConfig {
        match self {
            Preset::Full => ModelConfig {
                model_type,
                ..ModelConfig::default()
            },
            Preset::Tiny => ModelConfig::tiny(model_type, ModelConfig::default().input_shape),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub use_static: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            use_static: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

/// Splits a config file into entries. Duplicate keys are an error.
pub fn parse(text: &str) -> Result<Vec<Entry>> {
    let mut out: Vec<Entry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected `key = value`, got `{line}`", i + 1))?;
        let (key, value) = (k.trim(), v.trim());
        if key.is_empty() {
            bail!("line {}: empty key", i + 1);
        }
        if let Some(prev) = out.iter().find(|e| e.key == key) {
            bail!("line {}: `{key}` already set on line {}", i + 1, prev.line);
        }
        out.push(Entry {
            line: i + 1,
            key: key.to_string(),
            value: value.to_string(),
        });
    }
    Ok(out)
}

fn value<T: FromStr>(e: &Entry) -> Result<T> {
    e.value
        .parse()
        .map_err(|_| anyhow!("line {}: bad value `{}` for `{}`", e.line, e.value, e.key))
}

fn parse_bool(e: &Entry) -> Result<bool> {
    match e.value.as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => bail!("line {}: `{}` must be true or false", e.line, e.key),
    }
}

const DATA_KEYS: [&str; 3] = ["input_height", "input_width", "input_channels"];

/// The preset named in `entries`, if any.
pub fn preset(entries: &[Entry]) -> Result<Option<Preset>> {
    entries
        .iter()
        .find(|e| e.key == "preset")
        .map(|e| Preset::from_str_value(&e.value).with_context(|| format!("line {}", e.line)))
        .transpose()
}

/// Applies every non-preset entry on top of `cfg`. Unknown keys are errors.
pub fn apply(entries: &[Entry], cfg: &mut RunConfig) -> Result<()> {
    for e in entries {
        let t = &mut cfg.train;
        match e.key.as_str() {
            "preset" => {}
            "use_static" => cfg.use_static = parse_bool(e)?,
            "lr" => t.lr = value(e)?,
            "patience" => t.patience = value(e)?,
            "factor" => t.factor = value(e)?,
            "min_lr" => t.min_lr = value(e)?,
            "rel_threshold" => t.rel_threshold = value(e)?,
            "max_steps" => t.max_steps = value(e)?,
            "eval_interval" => t.eval_interval = value(e)?,
            "batch_size" => t.batch_size = value(e)?,
            "seed" => t.seed = value(e)?,
            k if DATA_KEYS.contains(&k) => {
                bail!(
                    "line {}: `{k}` is determined by the data and cannot be configured",
                    e.line
                )
            }
            k => {
                let used = cfg
                    .model
                    .apply_kv([(k, e.value.as_str())])
                    .with_context(|| format!("line {}", e.line))?;
                if used.is_empty() {
                    bail!("line {}: unknown key `{k}`", e.line);
                }
            }
        }
    }
    Ok(())
}
