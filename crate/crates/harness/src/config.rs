//! Flat `key = value` experiment configs and the built-in presets.
//!
//! Grammar: one `key = value` per line; `#` starts a comment; blank lines are
//! ignored; lists are comma-separated. Keys may appear once. Unknown keys are
//! rejected so typos do not silently fall back to defaults.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

pub const KNOWN_KEYS: &[&str] = &[
    "name",
    "seed",
    "trials",
    "schemes",
    "sigmas",
    "channels",
    "attack",
    "attack_alphas",
    "fpr",
    "tr_fpr",
    "tr_null_trials",
    "calibration_trials",
    "perm_index",
    "code_bits",
    "p_intra",
    "q_verify",
    "message_bits",
    "shape",
    "ring_metric",
    "prompts",
    "originals",
    "distortions",
    "cross",
    "samples",
    "stage1_epochs",
    "stage2_epochs",
    "masker_prompts",
    "masker_views",
];

pub const PRESETS: &[(&str, &str)] = &[
    ("t3-imprint", include_str!("../configs/t3-imprint.cfg")),
    ("t4-reprompt", include_str!("../configs/t4-reprompt.cfg")),
    ("t5-robust", include_str!("../configs/t5-robust.cfg")),
    ("t7-metrics", include_str!("../configs/t7-metrics.cfg")),
];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| HarnessError::config(format!("line {}: expected `key = value`", n + 1)))?;
            let key = key.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(HarnessError::config(format!("line {}: unknown key `{key}`", n + 1)));
            }
            if entries.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(HarnessError::config(format!("line {}: duplicate key `{key}`", n + 1)));
            }
        }
        Ok(Self { entries })
    }

    /// A preset name or a path to a config file.
    pub fn load(spec: &str) -> Result<Self> {
        if let Some((_, text)) = PRESETS.iter().find(|(name, _)| *name == spec) {
            return Self::parse(text);
        }
        let text = std::fs::read_to_string(Path::new(spec))
            .map_err(|e| HarnessError::config(format!("cannot read config {spec:?}: {e}")))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    /// Sorted `key = value` lines; parses back to the same config.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// SHA-256 of [`RawConfig::canonical`], hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical().as_bytes())
            .iter()
            .fold(String::new(), |mut s, b| {
                let _ = write!(s, "{b:02x}");
                s
            })
    }

    pub fn seed(&self) -> Result<u64> {
        self.get("seed")
            .ok_or_else(|| HarnessError::config("missing required field `seed`"))
            .and_then(|v| parse_value("seed", v))
    }

    pub fn parsed<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key).map_or(Ok(default), |v| parse_value(key, v))
    }

    pub fn parsed_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key).map(|v| parse_value(key, v)).transpose()
    }

    /// Comma-separated items, or `default` when the key is absent.
    pub fn list(&self, key: &str, default: &str) -> Vec<String> {
        split_list(self.get(key).unwrap_or(default))
    }

    pub fn parsed_list<T: FromStr>(&self, key: &str, default: &str) -> Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.list(key, default).iter().map(|v| parse_value(key, v)).collect()
    }
}

pub fn split_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| HarnessError::config(format!("field `{key}`: cannot parse {value:?}: {e}")))
}
