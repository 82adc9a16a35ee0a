//! Engine configuration as a plain `key=value` text file.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// How the number of clusters is chosen at inference.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KMode {
    /// Use the configured class counts directly.
    Gt,
    /// Elbow search over `[k, 3k]` starting from the configured count.
    Opt,
}

impl fmt::Display for KMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KMode::Gt => "gt",
            KMode::Opt => "opt",
        })
    }
}

impl FromStr for KMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gt" => Ok(KMode::Gt),
            "opt" => Ok(KMode::Opt),
            other => Err(Error::Config(format!("k_mode must be gt or opt, got {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub seed: u64,
    pub learning_rate: f64,
    pub lambda_global: f64,
    pub lambda_actor: f64,
    /// Registration weight on the feature distance.
    pub w_feature: f64,
    /// Registration weight on the IoU distance.
    pub w_iou: f64,
    pub attention_slots: usize,
    pub recurrent_layers: usize,
    pub event_dim: usize,
    pub bptt_window: usize,
    pub spatial_layers: usize,
    pub temporal_layers: usize,
    pub action_node: bool,
    pub k_mode: KMode,
    pub group_k: usize,
    pub action_k: usize,
    /// Communities per frame; 0 picks the count from the eigengap.
    pub membership_groups: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            learning_rate: 1e-3,
            lambda_global: 1.0,
            lambda_actor: 1.0,
            w_feature: 1.0,
            w_iou: 1.0,
            attention_slots: 16,
            recurrent_layers: 2,
            event_dim: 256,
            bptt_window: 8,
            spatial_layers: 1,
            temporal_layers: 1,
            action_node: true,
            k_mode: KMode::Gt,
            group_k: 2,
            action_k: 2,
            membership_groups: 0,
        }
    }
}

pub const CONFIG_KEYS: [&str; 17] = [
    "seed",
    "learning_rate",
    "lambda_global",
    "lambda_actor",
    "w_feature",
    "w_iou",
    "attention_slots",
    "recurrent_layers",
    "event_dim",
    "bptt_window",
    "spatial_layers",
    "temporal_layers",
    "action_node",
    "k_mode",
    "group_k",
    "action_k",
    "membership_groups",
];

fn parse<V: FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

impl Config {
    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "seed" => self.seed = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "lambda_global" => self.lambda_global = parse(key, value)?,
            "lambda_actor" => self.lambda_actor = parse(key, value)?,
            "w_feature" => self.w_feature = parse(key, value)?,
            "w_iou" => self.w_iou = parse(key, value)?,
            "attention_slots" => self.attention_slots = parse(key, value)?,
            "recurrent_layers" => self.recurrent_layers = parse(key, value)?,
            "event_dim" => self.event_dim = parse(key, value)?,
            "bptt_window" => self.bptt_window = parse(key, value)?,
            "spatial_layers" => self.spatial_layers = parse(key, value)?,
            "temporal_layers" => self.temporal_layers = parse(key, value)?,
            "action_node" => self.action_node = parse(key, value)?,
            "k_mode" => self.k_mode = value.parse()?,
            "group_k" => self.group_k = parse(key, value)?,
            "action_k" => self.action_k = parse(key, value)?,
            "membership_groups" => self.membership_groups = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Result<String> {
        Ok(match key {
            "seed" => self.seed.to_string(),
            "learning_rate" => self.learning_rate.to_string(),
            "lambda_global" => self.lambda_global.to_string(),
            "lambda_actor" => self.lambda_actor.to_string(),
            "w_feature" => self.w_feature.to_string(),
            "w_iou" => self.w_iou.to_string(),
            "attention_slots" => self.attention_slots.to_string(),
            "recurrent_layers" => self.recurrent_layers.to_string(),
            "event_dim" => self.event_dim.to_string(),
            "bptt_window" => self.bptt_window.to_string(),
            "spatial_layers" => self.spatial_layers.to_string(),
            "temporal_layers" => self.temporal_layers.to_string(),
            "action_node" => self.action_node.to_string(),
            "k_mode" => self.k_mode.to_string(),
            "group_k" => self.group_k.to_string(),
            "action_k" => self.action_k.to_string(),
            "membership_groups" => self.membership_groups.to_string(),
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let reals = [
            ("learning_rate", self.learning_rate),
            ("lambda_global", self.lambda_global),
            ("lambda_actor", self.lambda_actor),
            ("w_feature", self.w_feature),
            ("w_iou", self.w_iou),
        ];
        for (key, v) in reals {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{key} must be finite and nonnegative, got {v}")));
            }
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        let positive = [
            ("attention_slots", self.attention_slots),
            ("recurrent_layers", self.recurrent_layers),
            ("event_dim", self.event_dim),
            ("group_k", self.group_k),
            ("action_k", self.action_k),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{key} must be at least 1")));
            }
        }
        if self.bptt_window < 2 {
            return Err(Error::Config("bptt_window must be at least 2".into()));
        }
        for (key, v) in [("spatial_layers", self.spatial_layers), ("temporal_layers", self.temporal_layers)] {
            if v > 2 {
                return Err(Error::Config(format!("{key} must be 0, 1 or 2, got {v}")));
            }
        }
        Ok(())
    }

    /// Parses `key=value` lines over the defaults; blank lines and `#`
    /// comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Config::default();
        config.apply_text(text)?;
        Ok(config)
    }

    /// Overlays the `key=value` lines of `text` on this config, then validates.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", lineno + 1)))?;
            self.set(key.trim(), value)
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        self.validate()
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Canonical text form: every key, in a fixed order.
    pub fn to_text(&self) -> String {
        CONFIG_KEYS
            .iter()
            .map(|k| format!("{k}={}\n", self.get(k).expect("known key")))
            .collect()
    }

    /// SHA-256 of the canonical text form.
    pub fn hash(&self) -> [u8; 32] {
        Sha256::digest(self.to_text().as_bytes()).into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trip() {
        let c = Config::default();
        assert_eq!(Config::parse(&c.to_text()).unwrap(), c);
        assert!(c.to_text().contains("k_mode=gt\n"));
    }

    #[test]
    fn custom_round_trip_and_hash() {
        let mut c = Config::default();
        c.set("learning_rate", "0.0123456789").unwrap();
        c.set("k_mode", "opt").unwrap();
        c.set("action_node", "false").unwrap();
        let back = Config::parse(&c.to_text()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        assert_ne!(c.hash(), Config::default().hash());
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(Config::parse("colour=blue\n").is_err());
        assert!(Config::parse("spatial_layers=3\n").is_err());
        assert!(Config::parse("learning_rate=0\n").is_err());
        assert!(Config::parse("seed\n").is_err());
        assert!(Config::parse("k_mode=best\n").is_err());
        let c = Config::parse("# comment\n\nseed = 9\n").unwrap();
        assert_eq!(c.seed, 9);
    }
}
