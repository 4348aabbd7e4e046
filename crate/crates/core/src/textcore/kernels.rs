// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to every probability before a divergence is taken.
pub const EPSILON_FLOOR: f64 = 1e-10;

const SUM_TOLERANCE: f64 = 1e-9;

fn check_finite(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::NumericInput("empty score vector".into()));
    }
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NumericInput(format!(
            "non-finite value {} at index {i}",
            values[i]
        ))),
        None => Ok(()),
    }
}

/// Lowest index among the maximal entries.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// A probability vector over the vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Distribution(Vec<f64>);

impl Distribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_finite(&probs)?;
        if let Some(i) = probs.iter().position(|&p| p < 0.0) {
            return Err(Error::NumericInput(format!(
                "negative probability {} at index {i}",
                probs[i]
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::NumericInput(format!(
                "probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(Distribution(probs))
    }

    /// Normalize non-negative weights to sum to one.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        check_finite(&weights)?;
        if weights.iter().any(|&w| w < 0.0) {
            return Err(Error::NumericInput("negative weight".into()));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::NumericInput("weights sum to zero".into()));
        }
        Ok(Distribution(weights.into_iter().map(|w| w / sum).collect()))
    }

    pub fn uniform(len: usize) -> Self {
        Distribution(vec![1.0 / len as f64; len])
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    /// Floor every entry at [`EPSILON_FLOOR`] and renormalize. Vectors that
    /// are already above the floor come back bit-identical.
    pub fn smoothed(&self) -> Distribution {
        if self.0.iter().all(|&p| p >= EPSILON_FLOOR) {
            return self.clone();
        }
        let floored: Vec<f64> = self.0.iter().map(|&p| p.max(EPSILON_FLOOR)).collect();
        let sum: f64 = floored.iter().sum();
        Distribution(floored.into_iter().map(|p| p / sum).collect())
    }

    /// Natural-log view after smoothing, so every entry is finite.
    pub fn to_log_probs(&self) -> LogProbVector {
        LogProbVector(self.smoothed().0.iter().map(|p| p.ln()).collect())
    }
}

impl TryFrom<Vec<f64>> for Distribution {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Distribution> for Vec<f64> {
    fn from(d: Distribution) -> Self {
        d.0
    }
}

/// Normalized natural-log probabilities over the vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LogProbVector(Vec<f64>);

impl LogProbVector {
    /// Accepts values that are already normalized in log space.
    pub fn new(logprobs: Vec<f64>) -> Result<Self> {
        check_finite(&logprobs)?;
        let sum: f64 = logprobs.iter().map(|l| l.exp()).sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::NumericInput(format!(
                "log-probabilities exp-sum to {sum}, expected 1"
            )));
        }
        Ok(LogProbVector(logprobs))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn to_distribution(&self) -> Distribution {
        Distribution(self.0.iter().map(|l| l.exp()).collect())
    }
}

impl TryFrom<Vec<f64>> for LogProbVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<LogProbVector> for Vec<f64> {
    fn from(l: LogProbVector) -> Self {
        l.0
    }
}

/// `exp(scores / temperature)` normalized to sum to one.
pub fn softmax(scores: &[f64], temperature: f64) -> Result<Distribution> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::Config(format!(
            "temperature must be positive and finite, got {temperature}"
        )));
    }
    check_finite(scores)?;
    let scaled: Vec<f64> = scores.iter().map(|s| s / temperature).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(Distribution(exps.into_iter().map(|e| e / sum).collect()))
}

pub fn log_softmax(scores: &[f64]) -> Result<LogProbVector> {
    check_finite(scores)?;
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    Ok(LogProbVector(scores.iter().map(|s| s - lse).collect()))
}

/// `Σ a(x) ln(a(x)/b(x))` in nats, on smoothed copies of both inputs.
pub fn kl_divergence(a: &Distribution, b: &Distribution) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(a.len(), b.len()));
    }
    let a = a.smoothed();
    let b = b.smoothed();
    let kl: f64 = a
        .probs()
        .iter()
        .zip(b.probs())
        .map(|(&p, &q)| p * (p / q).ln())
        .sum();
    Ok(kl.max(0.0))
}

/// `½·KL(a‖b) + ½·KL(b‖a)`.
pub fn symmetric_divergence(a: &Distribution, b: &Distribution) -> Result<f64> {
    Ok(0.5 * kl_divergence(a, b)? + 0.5 * kl_divergence(b, a)?)
}
