//! Run configuration: flat `key = value` text with defaults for every field.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::data::{SparsityThresholds, SplitRatios};
use crate::error::{Error, Result};
use crate::online::UpdatePolicy;
use crate::params::{ModelShape, Variant};
use crate::topics::LdaParams;
use crate::train::{AdamConfig, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub variant: Variant,
    /// Topics per source network, `K^t`.
    pub topics: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub dropout: f64,
    pub lr: f64,
    pub top_k: usize,
    /// Time constant in seconds; `None` uses the mean training gap.
    pub tau: Option<f64>,
    pub max_iters: usize,
    /// Attention history length; `None` keeps everything.
    pub history_cap: Option<usize>,
    pub epochs: usize,
    pub seed: u64,
    pub clip: Option<f64>,
    pub truncation: Option<usize>,
    pub lda_iterations: usize,
    pub lda_beta: f64,
    pub min_src_a: usize,
    pub min_src_b: usize,
    pub min_target: usize,
    pub train_ratio: f64,
    pub validation_ratio: f64,
    pub test_ratio: f64,
    /// Events per user in one metric window.
    pub window: usize,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let split = SplitRatios::default();
        let sparse = SparsityThresholds::default();
        RunConfig {
            variant: Variant::Full,
            topics: 60,
            embed_dim: 100,
            hidden: 400,
            dropout: 0.35,
            lr: 0.001,
            top_k: 100,
            tau: None,
            max_iters: 2,
            history_cap: None,
            epochs: 10,
            seed: 0,
            clip: Some(5.0),
            truncation: None,
            lda_iterations: 200,
            lda_beta: 0.01,
            min_src_a: sparse.min_src_a,
            min_src_b: sparse.min_src_b,
            min_target: sparse.min_target,
            train_ratio: split.train,
            validation_ratio: split.validation,
            test_ratio: split.test,
            window: 5,
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("out"),
        }
    }
}

fn opt_to_string<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or("none".into(), T::to_string)
}

fn bad(key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        message: message.into(),
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| bad(key, format!("cannot parse `{value}`: {e}")))
}

fn parse_opt<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    match value {
        "none" => Ok(None),
        v => parse(key, v).map(Some),
    }
}

impl RunConfig {
    /// Desk-scale model for the synthetic benchmarks.
    pub fn scaled_down() -> Self {
        RunConfig {
            topics: 5,
            embed_dim: 16,
            hidden: 32,
            top_k: 10,
            ..RunConfig::default()
        }
    }

    pub const KEYS: [&'static str; 25] = [
        "variant",
        "topics",
        "embed_dim",
        "hidden",
        "dropout",
        "lr",
        "top_k",
        "tau",
        "max_iters",
        "history_cap",
        "epochs",
        "seed",
        "clip",
        "truncation",
        "lda_iterations",
        "lda_beta",
        "min_src_a",
        "min_src_b",
        "min_target",
        "train_ratio",
        "validation_ratio",
        "test_ratio",
        "window",
        "data_dir",
        "out_dir",
    ];

    pub fn get(&self, key: &str) -> Result<String> {
        Ok(match key {
            "variant" => self.variant.to_string(),
            "topics" => self.topics.to_string(),
            "embed_dim" => self.embed_dim.to_string(),
            "hidden" => self.hidden.to_string(),
            "dropout" => self.dropout.to_string(),
            "lr" => self.lr.to_string(),
            "top_k" => self.top_k.to_string(),
            "tau" => opt_to_string(&self.tau),
            "max_iters" => self.max_iters.to_string(),
            "history_cap" => opt_to_string(&self.history_cap),
            "epochs" => self.epochs.to_string(),
            "seed" => self.seed.to_string(),
            "clip" => opt_to_string(&self.clip),
            "truncation" => opt_to_string(&self.truncation),
            "lda_iterations" => self.lda_iterations.to_string(),
            "lda_beta" => self.lda_beta.to_string(),
            "min_src_a" => self.min_src_a.to_string(),
            "min_src_b" => self.min_src_b.to_string(),
            "min_target" => self.min_target.to_string(),
            "train_ratio" => self.train_ratio.to_string(),
            "validation_ratio" => self.validation_ratio.to_string(),
            "test_ratio" => self.test_ratio.to_string(),
            "window" => self.window.to_string(),
            "data_dir" => self.data_dir.display().to_string(),
            "out_dir" => self.out_dir.display().to_string(),
            _ => return Err(bad(key, "unknown key")),
        })
    }

    /// Sets one field from its text form. Does not validate across fields.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "variant" => self.variant = Variant::parse(value).map_err(|e| bad(key, e.to_string()))?,
            "topics" => self.topics = parse(key, value)?,
            "embed_dim" => self.embed_dim = parse(key, value)?,
            "hidden" => self.hidden = parse(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "top_k" => self.top_k = parse(key, value)?,
            "tau" => self.tau = parse_opt(key, value)?,
            "max_iters" => self.max_iters = parse(key, value)?,
            "history_cap" => self.history_cap = parse_opt(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "clip" => self.clip = parse_opt(key, value)?,
            "truncation" => self.truncation = parse_opt(key, value)?,
            "lda_iterations" => self.lda_iterations = parse(key, value)?,
            "lda_beta" => self.lda_beta = parse(key, value)?,
            "min_src_a" => self.min_src_a = parse(key, value)?,
            "min_src_b" => self.min_src_b = parse(key, value)?,
            "min_target" => self.min_target = parse(key, value)?,
            "train_ratio" => self.train_ratio = parse(key, value)?,
            "validation_ratio" => self.validation_ratio = parse(key, value)?,
            "test_ratio" => self.test_ratio = parse(key, value)?,
            "window" => self.window = parse(key, value)?,
            "data_dir" => self.data_dir = PathBuf::from(value),
            "out_dir" => self.out_dir = PathBuf::from(value),
            _ => return Err(bad(key, "unknown key")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("topics", self.topics),
            ("embed_dim", self.embed_dim),
            ("hidden", self.hidden),
            ("top_k", self.top_k),
            ("epochs", self.epochs),
            ("lda_iterations", self.lda_iterations),
            ("window", self.window),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(bad(key, "must be >= 1"));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(bad("dropout", format!("must lie in [0, 1), got {}", self.dropout)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(bad("lr", format!("must be positive, got {}", self.lr)));
        }
        if let Some(t) = self.tau {
            if !(t > 0.0 && t.is_finite()) {
                return Err(bad("tau", format!("must be positive, got {t}")));
            }
        }
        if self.max_iters > 16 {
            return Err(bad("max_iters", format!("{} is not a small bound", self.max_iters)));
        }
        if self.history_cap == Some(0) {
            return Err(bad("history_cap", "must be >= 1 or none"));
        }
        if let Some(c) = self.clip {
            if !(c > 0.0 && c.is_finite()) {
                return Err(bad("clip", format!("must be positive, got {c}")));
            }
        }
        if self.truncation == Some(0) {
            return Err(bad("truncation", "must be >= 1 or none"));
        }
        if !(self.lda_beta > 0.0 && self.lda_beta.is_finite()) {
            return Err(bad("lda_beta", "must be positive"));
        }
        self.split_ratios()
            .validate()
            .map_err(|e| bad("train_ratio", e.to_string()))?;
        Ok(())
    }

    /// Parses config text; later keys override earlier ones.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(i + 1, format!("expected `key = value`, got `{line}`")))?;
            cfg.set(k.trim(), v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text)
    }

    /// Every field, one `key = value` line each, in a fixed order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.pairs() {
            writeln!(out, "{k} = {v}").expect("write to string");
        }
        out
    }

    pub fn pairs(&self) -> Vec<(String, String)> {
        Self::KEYS
            .iter()
            .map(|k| (k.to_string(), self.get(k).expect("known key")))
            .collect()
    }

    /// Fields that affect results, leaving out filesystem paths.
    pub fn model_pairs(&self) -> Vec<(String, String)> {
        self.pairs()
            .into_iter()
            .filter(|(k, _)| k != "data_dir" && k != "out_dir")
            .collect()
    }

    pub fn write_echo(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn split_ratios(&self) -> SplitRatios {
        SplitRatios {
            train: self.train_ratio,
            validation: self.validation_ratio,
            test: self.test_ratio,
        }
    }

    pub fn thresholds(&self) -> SparsityThresholds {
        SparsityThresholds {
            min_src_a: self.min_src_a,
            min_src_b: self.min_src_b,
            min_target: self.min_target,
        }
    }

    pub fn lda(&self) -> LdaParams {
        LdaParams {
            num_topics: self.topics,
            alpha: None,
            beta: self.lda_beta,
            iterations: self.lda_iterations,
            seed: self.seed,
        }
    }

    pub fn shape(&self, variant: Variant, num_items: usize, num_users: usize) -> ModelShape {
        ModelShape::new(variant, self.topics, self.embed_dim, self.hidden, num_items, num_users)
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            dropout: self.dropout,
            adam: AdamConfig {
                lr: self.lr,
                ..AdamConfig::default()
            },
            clip: self.clip,
            top_k: self.top_k,
            truncation: self.truncation,
            seed: self.seed,
        }
    }

    pub fn policy(&self) -> UpdatePolicy {
        UpdatePolicy {
            max_iters: self.max_iters,
            top_k: self.top_k,
            clip: self.clip,
            monotone_guard: true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::default();
        assert_eq!((c.topics, c.embed_dim, c.hidden), (60, 100, 400));
        assert_eq!((c.dropout, c.lr, c.top_k), (0.35, 0.001, 100));
        assert_eq!((c.tau, c.max_iters, c.history_cap), (None, 2, None));
        c.validate().unwrap();
    }

    #[test]
    fn echo_round_trips() {
        let mut c = RunConfig::scaled_down();
        c.tau = Some(3600.5);
        c.history_cap = Some(7);
        c.variant = Variant::NoTIF;
        c.seed = 99;
        let back = RunConfig::parse_str(&c.to_text()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn overrides_and_comments() {
        let c = RunConfig::parse_str("# tiny\nhidden = 8\n\nembed_dim=3\nvariant = noat\nhidden = 4\n").unwrap();
        assert_eq!((c.hidden, c.embed_dim, c.variant), (4, 3, Variant::NoAt));
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "dropout = 1.0",
            "lr = 0",
            "hidden = 0",
            "tau = -1",
            "history_cap = 0",
            "bogus = 1",
            "variant = LSTM",
            "train_ratio = 0.9",
            "hidden 4",
            "max_iters = 100",
        ] {
            assert!(RunConfig::parse_str(text).is_err(), "{text}");
        }
    }
}
