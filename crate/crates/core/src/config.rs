//! Experiment configuration as a flat `key = value` document.
//!
//! Nested TOML is accepted too; tables are flattened into dotted keys.
//! Every key has a default and unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::SynthConfig;
use crate::losses::{LossConfig, LossKind};
use crate::models::{GeneratorConfig, HeadKind};
use crate::nn::AdamConfig;
use crate::roi::{RoiConfig, RoiMode};
use crate::training::TrainConfig;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "unet")]
    UNet,
    #[serde(rename = "seg-glgan")]
    SegGlgan,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::UNet => "unet",
            Method::SegGlgan => "seg-glgan",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unet" => Ok(Method::UNet),
            "seg-glgan" => Ok(Method::SegGlgan),
            other => Err(Error::Config(format!("method has no value '{other}' (unet, seg-glgan)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub method: Method,
    pub seed: u64,
    pub synth: SynthConfig,
    pub num_classes: usize,
    pub roi: RoiConfig,
    pub loss: LossConfig,
    pub model_depth: usize,
    pub base_channels: usize,
    pub disc_head: HeadKind,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub checkpoint_every: usize,
    pub eval_every: usize,
    pub hd_percentile: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        let generator = GeneratorConfig::default();
        Self {
            method: Method::UNet,
            seed: 0,
            synth: SynthConfig::default(),
            num_classes: 2,
            roi: RoiConfig::default(),
            loss: LossConfig::default(),
            model_depth: generator.depth,
            base_channels: generator.base_channels,
            disc_head: HeadKind::FullyConnected,
            epochs: 150,
            learning_rate: adam.learning_rate,
            batch_size: 8,
            beta1: adam.beta1,
            beta2: adam.beta2,
            adam_eps: adam.eps,
            checkpoint_every: 10,
            eval_every: 1,
            hd_percentile: 100.0,
        }
    }
}

/// Every recognised key, in documentation order.
pub const KEYS: &[&str] = &[
    "method",
    "seed",
    "synth.height",
    "synth.width",
    "synth.num_classes",
    "synth.radius_min",
    "synth.radius_max",
    "synth.foreground_fraction",
    "synth.noise_sigma",
    "synth.count_train",
    "synth.count_val",
    "data.num_classes",
    "roi.mode",
    "roi.static_h",
    "roi.static_w",
    "roi.margin",
    "roi.min_size",
    "loss.kind",
    "loss.lambda_local",
    "loss.lambda_adv",
    "loss.reduction",
    "loss.focal_gamma",
    "loss.class_weights",
    "model.depth",
    "model.base_channels",
    "disc.head",
    "train.epochs",
    "train.learning_rate",
    "train.batch_size",
    "train.beta1",
    "train.beta2",
    "train.eps",
    "train.checkpoint_every",
    "train.eval_every",
    "metrics.hd_percentile",
];

fn parse<V: FromStr>(key: &str, value: &str) -> Result<V>
where
    V::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key} = '{value}': {e}")))
}

fn parse_weights(value: &str) -> Result<Option<Vec<f64>>> {
    let v = value.trim().trim_start_matches('[').trim_end_matches(']').trim();
    if v.is_empty() || v == "none" {
        return Ok(None);
    }
    v.split(',')
        .map(|t| parse::<f64>("loss.class_weights", t.trim()))
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

fn unquote(v: &str) -> &str {
    let v = v.trim();
    if v.len() >= 2 && ((v.starts_with('"') && v.ends_with('"')) || (v.starts_with('\'') && v.ends_with('\''))) {
        &v[1..v.len() - 1]
    } else {
        v
    }
}

fn flatten_toml(prefix: &str, table: &toml::Table, out: &mut Vec<(String, String)>) -> Result<()> {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            toml::Value::Table(t) => flatten_toml(&key, t, out)?,
            toml::Value::String(s) => out.push((key, s.clone())),
            toml::Value::Integer(i) => out.push((key, i.to_string())),
            toml::Value::Float(f) => out.push((key, f.to_string())),
            toml::Value::Boolean(b) => out.push((key, b.to_string())),
            toml::Value::Array(items) => {
                let parts = items
                    .iter()
                    .map(|i| match i {
                        toml::Value::Integer(n) => Ok(n.to_string()),
                        toml::Value::Float(f) => Ok(f.to_string()),
                        toml::Value::String(s) => Ok(s.clone()),
                        _ => Err(Error::Config(format!("{key}: unsupported array element"))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                out.push((key, parts.join(",")));
            }
            toml::Value::Datetime(_) => return Err(Error::Config(format!("{key}: datetimes are not supported"))),
        }
    }
    Ok(())
}

/// Splits a document into `(key, value)` pairs without interpreting them.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let nested = text.lines().any(|l| l.trim_start().starts_with('['));
    let mut out = Vec::new();
    if nested {
        let table: toml::Table = text.parse().map_err(|e| Error::Config(format!("config: {e}")))?;
        flatten_toml("", &table, &mut out)?;
        return Ok(out);
    }
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("config line {}: expected key = value", n + 1)))?;
        let v = match v.find(" #") {
            Some(i) => &v[..i],
            None => v,
        };
        out.push((k.trim().to_string(), unquote(v).to_string()));
    }
    Ok(out)
}

impl ExperimentConfig {
    /// Parses a flat or nested document on top of the defaults.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (k, v) in parse_pairs(text)? {
            if !seen.insert(k.clone()) {
                return Err(Error::Config(format!("duplicate key {k}")));
            }
            cfg.set(&k, &v)?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    /// Applies one key. Unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "method" => self.method = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "synth.height" => self.synth.image_size.0 = parse(key, v)?,
            "synth.width" => self.synth.image_size.1 = parse(key, v)?,
            "synth.num_classes" => self.synth.num_classes = parse(key, v)?,
            "synth.radius_min" => self.synth.object_radius_range.0 = parse(key, v)?,
            "synth.radius_max" => self.synth.object_radius_range.1 = parse(key, v)?,
            "synth.foreground_fraction" => self.synth.foreground_fraction_target = parse(key, v)?,
            "synth.noise_sigma" => self.synth.noise_sigma = parse(key, v)?,
            "synth.count_train" => self.synth.count_train = parse(key, v)?,
            "synth.count_val" => self.synth.count_val = parse(key, v)?,
            "data.num_classes" => self.num_classes = parse(key, v)?,
            "roi.mode" => self.roi.mode = parse(key, v)?,
            "roi.static_h" => self.roi.static_dims.0 = parse(key, v)?,
            "roi.static_w" => self.roi.static_dims.1 = parse(key, v)?,
            "roi.margin" => self.roi.margin = parse(key, v)?,
            "roi.min_size" => self.roi.min_size = parse(key, v)?,
            "loss.kind" => self.loss.kind = parse(key, v)?,
            "loss.lambda_local" => self.loss.lambda_local = parse(key, v)?,
            "loss.lambda_adv" => self.loss.lambda_adv = parse(key, v)?,
            "loss.reduction" => self.loss.reduction = parse(key, v)?,
            "loss.focal_gamma" => self.loss.focal_gamma = parse(key, v)?,
            "loss.class_weights" => self.loss.class_weights = parse_weights(v)?,
            "model.depth" => self.model_depth = parse(key, v)?,
            "model.base_channels" => self.base_channels = parse(key, v)?,
            "disc.head" => self.disc_head = parse(key, v)?,
            "train.epochs" => self.epochs = parse(key, v)?,
            "train.learning_rate" => self.learning_rate = parse(key, v)?,
            "train.batch_size" => self.batch_size = parse(key, v)?,
            "train.beta1" => self.beta1 = parse(key, v)?,
            "train.beta2" => self.beta2 = parse(key, v)?,
            "train.eps" => self.adam_eps = parse(key, v)?,
            "train.checkpoint_every" => self.checkpoint_every = parse(key, v)?,
            "train.eval_every" => self.eval_every = parse(key, v)?,
            "metrics.hd_percentile" => self.hd_percentile = parse(key, v)?,
            other => return Err(Error::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Every key with its effective value; this is the config echo.
    pub fn to_flat(&self) -> BTreeMap<String, String> {
        let s = |v: &dyn fmt::Display| v.to_string();
        let weights = match &self.loss.class_weights {
            None => "none".to_string(),
            Some(w) => w.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","),
        };
        let pairs: Vec<(&str, String)> = vec![
            ("method", s(&self.method)),
            ("seed", s(&self.seed)),
            ("synth.height", s(&self.synth.image_size.0)),
            ("synth.width", s(&self.synth.image_size.1)),
            ("synth.num_classes", s(&self.synth.num_classes)),
            ("synth.radius_min", s(&self.synth.object_radius_range.0)),
            ("synth.radius_max", s(&self.synth.object_radius_range.1)),
            ("synth.foreground_fraction", s(&self.synth.foreground_fraction_target)),
            ("synth.noise_sigma", s(&self.synth.noise_sigma)),
            ("synth.count_train", s(&self.synth.count_train)),
            ("synth.count_val", s(&self.synth.count_val)),
            ("data.num_classes", s(&self.num_classes)),
            ("roi.mode", s(&self.roi.mode)),
            ("roi.static_h", s(&self.roi.static_dims.0)),
            ("roi.static_w", s(&self.roi.static_dims.1)),
            ("roi.margin", s(&self.roi.margin)),
            ("roi.min_size", s(&self.roi.min_size)),
            ("loss.kind", s(&self.loss.kind)),
            ("loss.lambda_local", s(&self.loss.lambda_local)),
            ("loss.lambda_adv", s(&self.loss.lambda_adv)),
            ("loss.reduction", s(&self.loss.reduction)),
            ("loss.focal_gamma", s(&self.loss.focal_gamma)),
            ("loss.class_weights", weights),
            ("model.depth", s(&self.model_depth)),
            ("model.base_channels", s(&self.base_channels)),
            ("disc.head", s(&self.disc_head)),
            ("train.epochs", s(&self.epochs)),
            ("train.learning_rate", s(&self.learning_rate)),
            ("train.batch_size", s(&self.batch_size)),
            ("train.beta1", s(&self.beta1)),
            ("train.beta2", s(&self.beta2)),
            ("train.eps", s(&self.adam_eps)),
            ("train.checkpoint_every", s(&self.checkpoint_every)),
            ("train.eval_every", s(&self.eval_every)),
            ("metrics.hd_percentile", s(&self.hd_percentile)),
        ];
        debug_assert_eq!(pairs.len(), KEYS.len());
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    /// Canonical flat document, keys in documentation order.
    pub fn to_text(&self) -> String {
        let flat = self.to_flat();
        KEYS.iter().map(|k| format!("{k} = {}\n", flat[*k])).collect()
    }

    pub fn generator_config(&self) -> GeneratorConfig {
        GeneratorConfig {
            in_channels: 1,
            num_classes: self.num_classes,
            depth: self.model_depth,
            base_channels: self.base_channels,
        }
    }

    /// Synthetic generator settings; the class count and seed follow the
    /// experiment-wide keys.
    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig { seed: self.seed, ..self.synth.clone() }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            adam: AdamConfig {
                learning_rate: self.learning_rate,
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.adam_eps,
            },
            loss: self.loss.clone(),
            roi: self.roi,
            generator: self.generator_config(),
            disc_head: self.disc_head,
            checkpoint_every: self.checkpoint_every,
            eval_every: self.eval_every,
            hd_percentile: self.hd_percentile,
        }
    }

    /// Checks that do not need data: method/loss/head compatibility and
    /// value ranges.
    pub fn validate(&self) -> Result<()> {
        if self.synth.num_classes != self.num_classes {
            return Err(Error::Config(format!(
                "synth.num_classes {} differs from data.num_classes {}",
                self.synth.num_classes, self.num_classes
            )));
        }
        if self.method == Method::SegGlgan && self.loss.kind != LossKind::Ce {
            return Err(Error::Config(format!(
                "method seg-glgan trains with cross-entropy; loss.kind = {} is not supported",
                self.loss.kind
            )));
        }
        if self.method == Method::SegGlgan && self.roi.mode == RoiMode::Dynamic && self.disc_head != HeadKind::Gap {
            return Err(Error::Config("roi.mode = dynamic needs disc.head = gap".into()));
        }
        self.train_config().validate()
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}
