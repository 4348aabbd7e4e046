// SPDX-License-Identifier: Apache-2.0

//! Grid search over rewriting hyperparameters on a development set.

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{Preset, RewriteConfig};
use super::rewrite;
use crate::decoder::ModelTriple;
use crate::error::{Error, Result};
use crate::metrics::{evaluate_with, MetricReport, ScorerSet};
use crate::par::Execution;
use crate::textcore::TokenSequence;

/// Candidate values per hyperparameter. Points are enumerated with `tau`
/// outermost, then repetition penalty, α₁, α₂ and temperature innermost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub tau: Vec<f64>,
    pub repetition_penalty: Vec<f64>,
    pub alpha1: Vec<f64>,
    pub alpha2: Vec<f64>,
    pub temperature: Vec<f64>,
}

impl SweepGrid {
    /// The grid that was searched to pick `preset`.
    pub fn for_preset(preset: Preset) -> Self {
        let tau = vec![1.2];
        let repetition_penalty = vec![1.0, 1.2, 1.5];
        match preset {
            Preset::Magr | Preset::Sbf => SweepGrid {
                tau,
                repetition_penalty,
                alpha1: vec![0.0, 0.5, 1.0, 1.5],
                alpha2: vec![3.0, 3.25, 3.5, 3.75, 4.0, 4.25, 4.5, 4.75, 5.0],
                temperature: vec![0.9, 1.3, 1.7, 2.1, 2.5, 2.9],
            },
            Preset::Dynahate => SweepGrid {
                tau,
                repetition_penalty,
                alpha1: vec![0.5, 1.0, 1.5],
                alpha2: vec![4.0, 4.25, 4.5, 4.75, 5.0],
                temperature: vec![0.9, 1.7, 2.5],
            },
        }
    }

    /// A grid holding exactly `config`.
    pub fn single(config: &RewriteConfig) -> Self {
        SweepGrid {
            tau: vec![config.tau],
            repetition_penalty: vec![config.repetition_penalty],
            alpha1: vec![config.alpha1],
            alpha2: vec![config.alpha2],
            temperature: vec![config.temperature],
        }
    }

    pub fn len(&self) -> usize {
        self.tau.len()
            * self.repetition_penalty.len()
            * self.alpha1.len()
            * self.alpha2.len()
            * self.temperature.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every grid point, with `max_len` and `mask_collapse` from `template`.
    pub fn configs(&self, template: &RewriteConfig) -> Result<Vec<RewriteConfig>> {
        for (name, values) in [
            ("tau", &self.tau),
            ("repetition_penalty", &self.repetition_penalty),
            ("alpha1", &self.alpha1),
            ("alpha2", &self.alpha2),
            ("temperature", &self.temperature),
        ] {
            if values.is_empty() {
                return Err(Error::Config(format!("sweep grid has no values for {name}")));
            }
        }
        let mut out = Vec::with_capacity(self.len());
        for &tau in &self.tau {
            for &repetition_penalty in &self.repetition_penalty {
                for &alpha1 in &self.alpha1 {
                    for &alpha2 in &self.alpha2 {
                        for &temperature in &self.temperature {
                            let cfg = RewriteConfig {
                                tau,
                                alpha1,
                                alpha2,
                                temperature,
                                repetition_penalty,
                                ..*template
                            };
                            cfg.validate()?;
                            out.push(cfg);
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }
}

/// Coefficients of the ranking score
/// `toxicity·(1 − tox) + similarity·sim − fluency·ppl`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionWeights {
    pub toxicity: f64,
    pub similarity: f64,
    pub fluency: f64,
}

impl Default for SelectionWeights {
    fn default() -> Self {
        SelectionWeights {
            toxicity: 1.0,
            similarity: 1.0,
            fluency: 0.001,
        }
    }
}

impl SelectionWeights {
    pub fn score(&self, report: &MetricReport) -> f64 {
        self.toxicity * (1.0 - report.mean_toxicity) + self.similarity * report.mean_similarity
            - self.fluency * report.mean_fluency
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    /// Position of this point in grid enumeration order.
    pub grid_index: usize,
    pub config: RewriteConfig,
    pub score: f64,
    pub report: MetricReport,
}

pub fn sweep(
    dev_set: &[TokenSequence],
    models: ModelTriple<'_>,
    grid: &SweepGrid,
    template: &RewriteConfig,
    scorers: ScorerSet<'_>,
    selection: &SelectionWeights,
) -> Result<Vec<SweepEntry>> {
    sweep_with(dev_set, models, grid, template, scorers, selection, Execution::default())
}

/// Evaluate every grid point and rank best first: higher score, then lower
/// mean toxicity, then earlier grid position.
pub fn sweep_with(
    dev_set: &[TokenSequence],
    models: ModelTriple<'_>,
    grid: &SweepGrid,
    template: &RewriteConfig,
    scorers: ScorerSet<'_>,
    selection: &SelectionWeights,
    exec: Execution,
) -> Result<Vec<SweepEntry>> {
    if dev_set.is_empty() {
        return Err(Error::Config("empty development set".into()));
    }
    let configs = grid.configs(template)?;
    let mut entries = exec.try_map_range(configs.len(), |i| {
        let config = configs[i];
        let rewrites = dev_set
            .iter()
            .map(|w| rewrite(w, models, &config).map(|r| r.rewrite))
            .collect::<Result<Vec<_>>>()?;
        let mut report = evaluate_with(dev_set, &rewrites, scorers, Execution::Sequential)?;
        report.config = Some(config);
        Ok::<_, Error>(SweepEntry {
            grid_index: i,
            config,
            score: selection.score(&report),
            report,
        })
    })?;
    entries.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then(
                a.report
                    .mean_toxicity
                    .partial_cmp(&b.report.mean_toxicity)
                    .unwrap_or(Ordering::Equal),
            )
            .then(a.grid_index.cmp(&b.grid_index))
    });
    Ok(entries)
}
