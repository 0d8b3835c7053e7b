use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ScoreMode;

/// Training hyperparameters. Field names double as config-file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Embedding dimension.
    pub d: usize,
    /// Negatives sampled per bag.
    pub n: usize,
    pub lr: f64,
    /// L2 weight.
    pub lambda: f64,
    /// Bags per mini-batch.
    pub batch: usize,
    pub epochs: usize,
    /// Probability of zeroing a component of `q_hr` during training.
    pub dropout: f64,
    pub seed: u64,
    pub mode: ScoreMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            d: 100,
            n: 50,
            lr: 0.01,
            lambda: 1e-5,
            batch: 4000,
            epochs: 500,
            dropout: 0.5,
            seed: 0,
            mode: ScoreMode::CrossE,
        }
    }
}

impl TrainConfig {
    pub const KEYS: [&'static str; 9] = [
        "d", "n", "lr", "lambda", "batch", "epochs", "dropout", "seed", "mode",
    ];

    pub fn wn18() -> Self {
        TrainConfig {
            d: 100,
            lambda: 1e-4,
            batch: 2048,
            ..Self::default()
        }
    }

    pub fn fb15k() -> Self {
        TrainConfig {
            d: 300,
            lambda: 1e-6,
            batch: 4000,
            ..Self::default()
        }
    }

    pub fn fb15k_237() -> Self {
        TrainConfig {
            d: 100,
            lambda: 1e-5,
            batch: 4000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Config("d must be at least 1".into()));
        }
        if self.n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "lr must be positive, got {}",
                self.lr
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        if self.batch == 0 {
            return Err(Error::Config("batch must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }

    /// Sets one field from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
        }
        match key {
            "d" => self.d = parse(key, value)?,
            "n" => self.n = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "batch" => self.batch = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "mode" => self.mode = value.parse()?,
            other => return Err(Error::UnknownKey(other.to_owned())),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. Blank lines and `#`
    /// comments are ignored.
    pub fn apply_kv(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(origin, i + 1, "expected `key = value`"))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_kv(&text, path)?;
        Ok(cfg)
    }

    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "d = {}", self.d);
        let _ = writeln!(out, "n = {}", self.n);
        let _ = writeln!(out, "lr = {}", self.lr);
        let _ = writeln!(out, "lambda = {}", self.lambda);
        let _ = writeln!(out, "batch = {}", self.batch);
        let _ = writeln!(out, "epochs = {}", self.epochs);
        let _ = writeln!(out, "dropout = {}", self.dropout);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "mode = {}", self.mode);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_round_trip() {
        let cfg = TrainConfig {
            lambda: 1e-6,
            mode: ScoreMode::CrossES,
            ..TrainConfig::fb15k()
        };
        let mut back = TrainConfig::default();
        back.apply_kv(&cfg.to_kv(), Path::new("mem")).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn fb15k_recipe_is_accepted_verbatim() {
        let mut cfg = TrainConfig::default();
        cfg.apply_kv(
            "n = 50\nlr = 0.01\nd = 300\nlambda = 1e-6\nbatch = 4000\n",
            Path::new("mem"),
        )
        .unwrap();
        assert_eq!(cfg, TrainConfig::fb15k());
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_key_is_named() {
        let mut cfg = TrainConfig::default();
        let err = cfg
            .apply_kv("d = 10\nlearning_rate = 0.1\n", Path::new("mem"))
            .unwrap_err();
        assert!(matches!(err, Error::UnknownKey(ref k) if k == "learning_rate"));
    }

    #[test]
    fn validation_bounds() {
        let ok = TrainConfig::default();
        ok.validate().unwrap();
        for bad in [
            TrainConfig { n: 0, ..ok.clone() },
            TrainConfig {
                dropout: 1.0,
                ..ok.clone()
            },
            TrainConfig {
                lr: 0.0,
                ..ok.clone()
            },
            TrainConfig {
                lambda: -1.0,
                ..ok.clone()
            },
            TrainConfig {
                batch: 0,
                ..ok.clone()
            },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }
}
