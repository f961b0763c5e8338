//! Flat `key = value` configuration.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fusion::RjcaConfig;
use crate::objective::{DEFAULT_MARGIN, DEFAULT_SCALE};

/// Splits `key = value` lines; `#` starts a comment.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{line}`", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Key/value pair with a typed parse that names the key on failure.
pub(crate) struct ConfigValue<'a>(pub &'a str, pub &'a str);

impl ConfigValue<'_> {
    pub fn parse<T: FromStr>(&self) -> Result<T> {
        self.1
            .parse()
            .map_err(|_| Error::Config(format!("invalid value `{}` for `{}`", self.1, self.0)))
    }

    fn parse_bool(&self) -> Result<bool> {
        match self.1 {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            _ => Err(Error::Config(format!("invalid boolean `{}` for `{}`", self.1, self.0))),
        }
    }
}

/// Which system is trained: the fusion model, a fusion baseline, or one modality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SystemKind {
    Rjca,
    Concat,
    CrossAttention,
    AudioOnly,
    VisualOnly,
}

impl SystemKind {
    pub const ALL: [SystemKind; 5] = [
        SystemKind::Rjca,
        SystemKind::Concat,
        SystemKind::CrossAttention,
        SystemKind::AudioOnly,
        SystemKind::VisualOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SystemKind::Rjca => "rjca",
            SystemKind::Concat => "concat",
            SystemKind::CrossAttention => "cross_attention",
            SystemKind::AudioOnly => "audio",
            SystemKind::VisualOnly => "visual",
        }
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SystemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SystemKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown system `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    Momentum,
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "momentum" => Ok(OptimizerKind::Momentum),
            other => Err(Error::Config(format!("unknown optimizer `{other}`"))),
        }
    }
}

impl OptimizerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Momentum => "momentum",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub system: SystemKind,
    pub model: RjcaConfig,
    pub hidden: usize,
    pub asp_dim: usize,
    pub embed_dim: usize,
    pub aam_scale: f64,
    pub aam_margin: f64,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Verify every tape operation produces finite values.
    pub debug_checks: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            system: SystemKind::Rjca,
            model: RjcaConfig::default(),
            hidden: 64,
            asp_dim: 64,
            embed_dim: 128,
            aam_scale: DEFAULT_SCALE,
            aam_margin: DEFAULT_MARGIN,
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            momentum: 0.9,
            batch_size: 32,
            epochs: 20,
            seed: 0,
            debug_checks: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        for (name, v) in [
            ("hidden", self.hidden),
            ("asp_dim", self.asp_dim),
            ("embed_dim", self.embed_dim),
            ("batch_size", self.batch_size),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.aam_scale > 0.0) {
            return Err(Error::Config("aam_scale must be positive".into()));
        }
        if !(self.aam_margin >= 0.0 && self.aam_margin < std::f64::consts::FRAC_PI_2) {
            return Err(Error::Config("aam_margin must lie in [0, pi/2)".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be finite and non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must be in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = ConfigValue(key, value);
        match key {
            "system" => self.system = value.parse()?,
            "audio_dim" => self.model.audio_dim = v.parse()?,
            "visual_dim" => self.model.visual_dim = v.parse()?,
            "segments" => self.model.segments = v.parse()?,
            "iterations" => self.model.iterations = v.parse()?,
            "use_blstm" => self.model.use_blstm = v.parse_bool()?,
            "share_weights" => self.model.share_weights = v.parse_bool()?,
            "hidden" => self.hidden = v.parse()?,
            "asp_dim" => self.asp_dim = v.parse()?,
            "embed_dim" => self.embed_dim = v.parse()?,
            "aam_scale" => self.aam_scale = v.parse()?,
            "aam_margin" => self.aam_margin = v.parse()?,
            "optimizer" => self.optimizer = value.parse()?,
            "learning_rate" => self.learning_rate = v.parse()?,
            "momentum" => self.momentum = v.parse()?,
            "batch_size" => self.batch_size = v.parse()?,
            "epochs" => self.epochs = v.parse()?,
            "seed" => self.seed = v.parse()?,
            "debug_checks" => self.debug_checks = v.parse_bool()?,
            _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` text on top of `self`.
    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (k, v) in parse_key_values(text)? {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn from_config_str(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        cfg.apply_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_config_str(&text)
    }

    /// Canonical text form: every key, fixed order, round-trip float formatting.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        let m = &self.model;
        let _ = writeln!(out, "system = {}", self.system);
        let _ = writeln!(out, "audio_dim = {}", m.audio_dim);
        let _ = writeln!(out, "visual_dim = {}", m.visual_dim);
        let _ = writeln!(out, "segments = {}", m.segments);
        let _ = writeln!(out, "iterations = {}", m.iterations);
        let _ = writeln!(out, "use_blstm = {}", m.use_blstm);
        let _ = writeln!(out, "share_weights = {}", m.share_weights);
        let _ = writeln!(out, "hidden = {}", self.hidden);
        let _ = writeln!(out, "asp_dim = {}", self.asp_dim);
        let _ = writeln!(out, "embed_dim = {}", self.embed_dim);
        let _ = writeln!(out, "aam_scale = {:?}", self.aam_scale);
        let _ = writeln!(out, "aam_margin = {:?}", self.aam_margin);
        let _ = writeln!(out, "optimizer = {}", self.optimizer.as_str());
        let _ = writeln!(out, "learning_rate = {:?}", self.learning_rate);
        let _ = writeln!(out, "momentum = {:?}", self.momentum);
        let _ = writeln!(out, "batch_size = {}", self.batch_size);
        let _ = writeln!(out, "epochs = {}", self.epochs);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "debug_checks = {}", self.debug_checks);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_documented_values() {
        let c = TrainConfig::default();
        assert_eq!(c.model.iterations, 3);
        assert_eq!((c.hidden, c.asp_dim, c.embed_dim), (64, 64, 128));
        assert_eq!((c.aam_scale, c.aam_margin), (30.0, 0.2));
        assert_eq!(c.learning_rate, 1e-3);
    }

    #[test]
    fn canonical_text_round_trip() {
        let mut c = TrainConfig::default();
        c.apply_str("system = concat\nlearning_rate = 0.0030000000000000001 # comment\nuse_blstm = false").unwrap();
        assert_eq!(c.system, SystemKind::Concat);
        let text = c.to_config_string();
        let back = TrainConfig::from_config_str(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_config_string(), text);
    }

    #[test]
    fn errors() {
        assert!(TrainConfig::from_config_str("nope = 1").is_err());
        assert!(TrainConfig::from_config_str("epochs = many").is_err());
        assert!(TrainConfig::from_config_str("iterations = 0").is_err());
        assert!(TrainConfig::from_config_str("system = self_attention").is_err());
        assert!(TrainConfig::from_config_str("just a line").is_err());
    }
}
