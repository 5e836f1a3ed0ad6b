//! Run configuration: defaults, overridden by a config file, overridden by
//! command-line flags. Unknown keys are rejected; the effective config can be
//! echoed into a run directory so every run is reproducible from its output.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use crate::evalmetrics::DistinctMode;
use crate::objective::LossWeights;
use crate::pipeline::{ModelConfig, TrainConfig};

#[derive(Debug)]
pub enum ConfigError {
    Io(std::io::Error),
    UnknownKey(String),
    BadValue { key: String, value: String, expected: &'static str },
    BadLine { line: usize, content: String },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io(e) => write!(f, "config io error: {e}"),
            ConfigError::UnknownKey(k) => write!(f, "unknown config key `{k}`"),
            ConfigError::BadValue { key, value, expected } => {
                write!(f, "config key `{key}`: `{value}` is not {expected}")
            }
            ConfigError::BadLine { line, content } => {
                write!(f, "config line {line}: expected `section.key = value`, got `{content}`")
            }
        }
    }
}

impl std::error::Error for ConfigError {}

impl From<std::io::Error> for ConfigError {
    fn from(e: std::io::Error) -> Self {
        ConfigError::Io(e)
    }
}

/// (key, default, help) table; the single source of truth for known keys.
pub const KNOWN_KEYS: &[(&str, &str, &str)] = &[
    ("model.dim", "300", "feature dimension used throughout the model"),
    ("model.max_len", "512", "maximum sequence length (positional table size)"),
    ("model.layers", "2", "transformer encoder layers per encoder"),
    ("model.heads", "2", "attention heads"),
    ("model.decoder_layers", "2", "transformer decoder layers"),
    ("model.tie_encoders", "false", "share one parameter set across the four context encoders"),
    ("decode.max_steps", "30", "maximum greedy decoding steps"),
    ("loss.alpha1_hi", "1.5", "prediction-loss weight while it exceeds the response loss"),
    ("loss.alpha1_lo", "0.3", "prediction-loss weight afterwards"),
    ("loss.alpha2", "1.2", "emotion-loss weight"),
    ("loss.alpha3", "0.12", "attention-loss weight"),
    ("loss.switch_normalized", "true", "compare per-token means in the alpha1 switch"),
    ("train.lr", "0.0001", "Adam learning rate"),
    ("train.batch", "16", "mini-batch size"),
    ("train.epochs", "30", "maximum training epochs"),
    ("train.seed", "0", "seed for init, shuffling and data generation"),
    ("train.patience", "5", "early-stopping patience on validation perplexity"),
    ("train.no_sip", "false", "ablation: skip speaker-intention fusion"),
    ("train.no_lup", "false", "ablation: skip last-utterance prediction"),
    ("data.k_max", "5", "max concepts attached per word"),
    ("metrics.distinct_mode", "pooled", "distinct-n pooling: pooled | averaged"),
];

/// Key-value configuration with layered merging.
#[derive(Debug, Clone)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            values: KNOWN_KEYS
                .iter()
                .map(|(k, d, _)| (k.to_string(), d.to_string()))
                .collect(),
        }
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        if !self.values.contains_key(key) {
            return Err(ConfigError::UnknownKey(key.to_string()));
        }
        self.values.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    /// Merge `section.key = value` lines from a file. `#` starts a comment.
    pub fn merge_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path)?;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::BadLine {
                    line: i + 1,
                    content: raw.to_string(),
                });
            };
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values
            .get(key)
            .unwrap_or_else(|| panic!("unknown config key `{key}` queried"))
    }

    pub fn get_usize(&self, key: &str) -> Result<usize, ConfigError> {
        self.get(key).parse().map_err(|_| ConfigError::BadValue {
            key: key.into(),
            value: self.get(key).into(),
            expected: "a non-negative integer",
        })
    }

    pub fn get_u64(&self, key: &str) -> Result<u64, ConfigError> {
        self.get(key).parse().map_err(|_| ConfigError::BadValue {
            key: key.into(),
            value: self.get(key).into(),
            expected: "a non-negative integer",
        })
    }

    pub fn get_f64(&self, key: &str) -> Result<f64, ConfigError> {
        self.get(key).parse().map_err(|_| ConfigError::BadValue {
            key: key.into(),
            value: self.get(key).into(),
            expected: "a number",
        })
    }

    pub fn get_bool(&self, key: &str) -> Result<bool, ConfigError> {
        match self.get(key) {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            other => Err(ConfigError::BadValue {
                key: key.into(),
                value: other.into(),
                expected: "a boolean (true/false)",
            }),
        }
    }

    pub fn distinct_mode(&self) -> Result<DistinctMode, ConfigError> {
        match self.get("metrics.distinct_mode") {
            "pooled" => Ok(DistinctMode::Pooled),
            "averaged" => Ok(DistinctMode::Averaged),
            other => Err(ConfigError::BadValue {
                key: "metrics.distinct_mode".into(),
                value: other.into(),
                expected: "`pooled` or `averaged`",
            }),
        }
    }

    /// Effective config as sorted `key = value` lines.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    pub fn model_config(&self, vocab_size: usize, num_emotions: usize) -> Result<ModelConfig, ConfigError> {
        Ok(ModelConfig {
            dim: self.get_usize("model.dim")?,
            heads: self.get_usize("model.heads")?,
            encoder_layers: self.get_usize("model.layers")?,
            decoder_layers: self.get_usize("model.decoder_layers")?,
            max_len: self.get_usize("model.max_len")?,
            tie_encoders: self.get_bool("model.tie_encoders")?,
            vocab_size,
            num_emotions,
            seed: self.get_u64("train.seed")?,
        })
    }

    pub fn train_config(&self) -> Result<TrainConfig, ConfigError> {
        Ok(TrainConfig {
            weights: LossWeights {
                alpha1_hi: self.get_f64("loss.alpha1_hi")?,
                alpha1_lo: self.get_f64("loss.alpha1_lo")?,
                alpha2: self.get_f64("loss.alpha2")?,
                alpha3: self.get_f64("loss.alpha3")?,
            },
            lr: self.get_f64("train.lr")?,
            batch_size: self.get_usize("train.batch")?,
            epochs: self.get_usize("train.epochs")?,
            seed: self.get_u64("train.seed")?,
            patience: self.get_usize("train.patience")?,
            disable_sip: self.get_bool("train.no_sip")?,
            disable_lup: self.get_bool("train.no_lup")?,
            switch_normalized: self.get_bool("loss.switch_normalized")?,
            decode_max_steps: self.get_usize("decode.max_steps")?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_cover_every_known_key() {
        let cfg = RunConfig::default();
        for (k, d, _) in KNOWN_KEYS {
            assert_eq!(cfg.get(k), *d);
        }
        assert_eq!(cfg.get_f64("loss.alpha1_hi").unwrap(), 1.5);
        assert_eq!(cfg.get_f64("loss.alpha1_lo").unwrap(), 0.3);
        assert_eq!(cfg.get_f64("loss.alpha2").unwrap(), 1.2);
        assert_eq!(cfg.get_f64("loss.alpha3").unwrap(), 0.12);
        assert_eq!(cfg.get_usize("train.batch").unwrap(), 16);
        assert_eq!(cfg.get_usize("decode.max_steps").unwrap(), 30);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut cfg = RunConfig::default();
        assert!(matches!(
            cfg.set("model.unknown", "1"),
            Err(ConfigError::UnknownKey(_))
        ));
    }

    #[test]
    fn file_merge_and_precedence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "# comment\nmodel.dim = 64\ntrain.lr = 0.002 # inline\n").unwrap();
        let mut cfg = RunConfig::default();
        cfg.merge_file(&path).unwrap();
        assert_eq!(cfg.get_usize("model.dim").unwrap(), 64);
        assert_eq!(cfg.get_f64("train.lr").unwrap(), 0.002);
        // flag overrides file
        cfg.set("model.dim", "32").unwrap();
        assert_eq!(cfg.get_usize("model.dim").unwrap(), 32);
    }

    #[test]
    fn bad_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "model.dim = 64\nnot a setting\n").unwrap();
        let mut cfg = RunConfig::default();
        let err = cfg.merge_file(&path).unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn echo_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("echo.conf");
        let mut cfg = RunConfig::default();
        cfg.set("model.dim", "48").unwrap();
        std::fs::write(&path, cfg.echo()).unwrap();
        let mut again = RunConfig::default();
        again.merge_file(&path).unwrap();
        assert_eq!(again.echo(), cfg.echo());
    }

    #[test]
    fn typed_getter_errors_name_the_key() {
        let mut cfg = RunConfig::default();
        cfg.set("train.batch", "not-a-number").unwrap();
        let err = cfg.get_usize("train.batch").unwrap_err();
        assert!(err.to_string().contains("train.batch"));
    }
}
