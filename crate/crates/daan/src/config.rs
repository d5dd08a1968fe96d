//! Experiment configuration files: a flat, line-oriented `key = value`
//! format that round-trips exactly and rejects anything it does not know.
//!
//! Every run is described by one file (plus command-line overrides). The
//! parser starts from the desk-scale defaults, so a config file only needs
//! the keys it changes; `to_text` writes all of them back out, which makes
//! the file saved next to a run a complete record of it.

use std::fmt::Write as _;
use std::path::Path;

use crate::data::synth::SynthConfig;
use crate::error::ConfigError;
use crate::trainer::{Method, TrainConfig, TranslatorMode};

/// Everything one experiment needs: training knobs plus the synthetic
/// dataset settings, and optionally a schema file replacing the built-in
/// shape grouping.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    pub synth: SynthConfig,
    /// Attribute grouping file; `None` uses the synthetic dataset's
    /// built-in groups.
    pub schema_file: Option<String>,
}

/// Recognized keys, one per line in file order, used both to reject
/// unknown keys and to emit `to_text` deterministically.
const KEYS: &[&str] = &[
    "method",
    "multitask",
    "translator",
    "batch_size",
    "learning_rate",
    "momentum",
    "weight_decay",
    "poly_power",
    "disc_learning_rate",
    "lambda_generator",
    "lambda_critic",
    "lambda_label",
    "lambda_feature",
    "lambda_attention",
    "total_steps",
    "checkpoint_every",
    "seed",
    "image_size",
    "n_per_domain",
    "n_test_per_domain",
    "style_gap",
    "data_seed",
    "schema_file",
];

impl ExperimentConfig {
    /// Desk-scale defaults: small backbone inputs, synthetic data, the
    /// oracle translator and the short schedule.
    pub fn desk_default() -> Self {
        ExperimentConfig {
            train: TrainConfig::desk(),
            synth: SynthConfig::default(),
            schema_file: None,
        }
    }

    /// Parse a config file's text. `path` only labels error messages.
    /// Unknown keys, unparsable values and junk lines are all errors;
    /// omitted keys keep their desk-scale defaults.
    pub fn parse(text: &str, path: &str) -> Result<Self, ConfigError> {
        let mut config = ExperimentConfig::desk_default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let stripped = raw.trim();
            if stripped.is_empty() || stripped.starts_with('#') {
                continue;
            }
            let Some((key, value)) = stripped.split_once('=') else {
                return Err(ConfigError::Malformed {
                    path: path.to_string(),
                    line,
                    text: raw.to_string(),
                });
            };
            let key = key.trim();
            let value = value.trim();
            if !KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey {
                    path: path.to_string(),
                    line,
                    key: key.to_string(),
                });
            }
            config.apply(key, value).map_err(|message| ConfigError::BadValue {
                path: path.to_string(),
                line,
                key: key.to_string(),
                value: value.to_string(),
                message,
            })?;
        }
        Ok(config)
    }

    /// Read and parse a config file.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        ExperimentConfig::parse(&text, &path.display().to_string())
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(value: &str) -> Result<T, String>
        where
            T::Err: std::fmt::Display,
        {
            value.parse().map_err(|e| format!("{e}"))
        }
        match key {
            "method" => {
                self.train.method = Method::parse(value).ok_or_else(|| {
                    let names: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
                    format!("expected one of {}", names.join(", "))
                })?;
            }
            "multitask" => {
                self.train.multitask = match value {
                    "on" => true,
                    "off" => false,
                    _ => return Err("expected on or off".into()),
                };
            }
            "translator" => {
                self.train.translator_mode = TranslatorMode::parse(value)
                    .ok_or("expected learned, frozen or analytic")?;
            }
            "batch_size" => self.train.batch_size = num(value)?,
            "learning_rate" => self.train.learning_rate = num(value)?,
            "momentum" => self.train.momentum = num(value)?,
            "weight_decay" => self.train.weight_decay = num(value)?,
            "poly_power" => self.train.poly_power = num(value)?,
            "disc_learning_rate" => self.train.disc_learning_rate = num(value)?,
            "lambda_generator" => self.train.lambda_generator = num(value)?,
            "lambda_critic" => self.train.lambda_critic = num(value)?,
            "lambda_label" => self.train.lambda_label = num(value)?,
            "lambda_feature" => self.train.lambda_feature = num(value)?,
            "lambda_attention" => self.train.lambda_attention = num(value)?,
            "total_steps" => self.train.total_steps = num(value)?,
            "checkpoint_every" => self.train.checkpoint_every = num(value)?,
            "seed" => self.train.seed = num(value)?,
            "image_size" => self.synth.image_size = num(value)?,
            "n_per_domain" => self.synth.n_per_domain = num(value)?,
            "n_test_per_domain" => self.synth.n_test_per_domain = num(value)?,
            "style_gap" => self.synth.style_gap = num(value)?,
            "data_seed" => self.synth.seed = num(value)?,
            "schema_file" => self.schema_file = Some(value.to_string()),
            _ => unreachable!("key {key} already validated"),
        }
        Ok(())
    }

    fn value_of(&self, key: &str) -> Option<String> {
        let s = match key {
            "method" => self.train.method.name().to_string(),
            "multitask" => if self.train.multitask { "on" } else { "off" }.to_string(),
            "translator" => self.train.translator_mode.name().to_string(),
            "batch_size" => self.train.batch_size.to_string(),
            "learning_rate" => self.train.learning_rate.to_string(),
            "momentum" => self.train.momentum.to_string(),
            "weight_decay" => self.train.weight_decay.to_string(),
            "poly_power" => self.train.poly_power.to_string(),
            "disc_learning_rate" => self.train.disc_learning_rate.to_string(),
            "lambda_generator" => self.train.lambda_generator.to_string(),
            "lambda_critic" => self.train.lambda_critic.to_string(),
            "lambda_label" => self.train.lambda_label.to_string(),
            "lambda_feature" => self.train.lambda_feature.to_string(),
            "lambda_attention" => self.train.lambda_attention.to_string(),
            "total_steps" => self.train.total_steps.to_string(),
            "checkpoint_every" => self.train.checkpoint_every.to_string(),
            "seed" => self.train.seed.to_string(),
            "image_size" => self.synth.image_size.to_string(),
            "n_per_domain" => self.synth.n_per_domain.to_string(),
            "n_test_per_domain" => self.synth.n_test_per_domain.to_string(),
            "style_gap" => self.synth.style_gap.to_string(),
            "data_seed" => self.synth.seed.to_string(),
            "schema_file" => return self.schema_file.clone(),
            _ => unreachable!("key {key} not serialized"),
        };
        Some(s)
    }

    /// Serialize every key. Numbers print in Rust's shortest round-trip
    /// form, so `parse(to_text())` reproduces the config exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# Experiment configuration. Omitted keys keep desk-scale defaults.\n");
        for &key in KEYS {
            if let Some(value) = self.value_of(key) {
                writeln!(out, "{key} = {value}").expect("string write");
            }
        }
        out
    }
}
