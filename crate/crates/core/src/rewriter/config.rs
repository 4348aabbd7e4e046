// SPDX-License-Identifier: Apache-2.0

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::decoder::EnsembleWeights;
use crate::error::{Error, Result};
use crate::masker::DEFAULT_THRESHOLD;

pub const DEFAULT_MAX_LEN: usize = 128;

/// Every hyperparameter of one rewriting run. Serialized as a flat TOML
/// table; unknown keys are rejected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewriteConfig {
    pub tau: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub temperature: f64,
    pub repetition_penalty: f64,
    pub max_len: usize,
    pub mask_collapse: bool,
}

impl Default for RewriteConfig {
    fn default() -> Self {
        RewriteConfig {
            tau: DEFAULT_THRESHOLD,
            alpha1: 0.0,
            alpha2: 0.0,
            temperature: 1.0,
            repetition_penalty: 1.0,
            max_len: DEFAULT_MAX_LEN,
            mask_collapse: false,
        }
    }
}

impl RewriteConfig {
    pub fn weights(&self) -> EnsembleWeights {
        EnsembleWeights {
            expert: self.alpha1,
            antiexpert: self.alpha2,
            base_temperature: self.temperature,
            repetition_penalty: self.repetition_penalty,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if self.max_len == 0 {
            return Err(Error::Config("max_len must be at least 1".into()));
        }
        self.weights().validate()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RewriteConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_toml())?;
        Ok(())
    }
}

impl fmt::Display for RewriteConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "tau={} alpha1={} alpha2={} temperature={} repetition_penalty={} max_len={} mask_collapse={}",
            self.tau,
            self.alpha1,
            self.alpha2,
            self.temperature,
            self.repetition_penalty,
            self.max_len,
            self.mask_collapse
        )
    }
}

/// Per-dataset hyperparameters selected on the development sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    Magr,
    Sbf,
    Dynahate,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Magr, Preset::Sbf, Preset::Dynahate];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Magr => "magr",
            Preset::Sbf => "sbf",
            Preset::Dynahate => "dynahate",
        }
    }

    pub fn config(self) -> RewriteConfig {
        let (repetition_penalty, alpha1, alpha2, temperature) = match self {
            Preset::Magr => (1.0, 1.5, 4.25, 2.5),
            Preset::Sbf => (1.5, 1.5, 5.0, 2.9),
            Preset::Dynahate => (1.0, 1.5, 4.75, 2.5),
        };
        RewriteConfig {
            tau: 1.2,
            alpha1,
            alpha2,
            temperature,
            repetition_penalty,
            max_len: DEFAULT_MAX_LEN,
            mask_collapse: false,
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "magr" => Ok(Preset::Magr),
            "sbf" => Ok(Preset::Sbf),
            "dynahate" => Ok(Preset::Dynahate),
            _ => Err(Error::Config(format!(
                "unknown preset {s:?} (expected magr, sbf or dynahate)"
            ))),
        }
    }
}

pub fn preset(name: &str) -> Result<RewriteConfig> {
    Ok(name.parse::<Preset>()?.config())
}
