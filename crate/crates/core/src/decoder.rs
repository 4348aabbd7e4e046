// SPDX-License-Identifier: Apache-2.0

//! Contextual replacing: greedy product-of-experts decoding.
//!
//! At every step the base model sees the original sequence while the expert
//! and anti-expert see the masked one. Their log-probabilities are combined as
//! `z / T + α₁·z⁺ − α₂·z⁻`, which after the softmax is the normalized product
//! `p^(1/T) · (p⁺)^α₁ · (p⁻)^(−α₂)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::{ensure_same_vocabulary, DenoisingLm};
use crate::textcore::{softmax, Distribution, LogProbVector, MaskedSequence, TokenId, TokenSequence, BOS, EOS, MASK};

/// Mixing weights for one ensemble step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleWeights {
    /// α₁
    pub expert: f64,
    /// α₂
    pub antiexpert: f64,
    /// Applied to the base model's scores only.
    pub base_temperature: f64,
    pub repetition_penalty: f64,
}

impl EnsembleWeights {
    /// Weights under which the ensemble reduces to the base distribution.
    pub const NEUTRAL: EnsembleWeights = EnsembleWeights {
        expert: 0.0,
        antiexpert: 0.0,
        base_temperature: 1.0,
        repetition_penalty: 1.0,
    };

    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite();
        if !(ok(self.expert) && self.expert >= 0.0 && ok(self.antiexpert) && self.antiexpert >= 0.0) {
            return Err(Error::Config(format!(
                "expert weights must be non-negative, got {} and {}",
                self.expert, self.antiexpert
            )));
        }
        if !(ok(self.base_temperature) && self.base_temperature > 0.0) {
            return Err(Error::Config(format!(
                "base temperature must be positive, got {}",
                self.base_temperature
            )));
        }
        if !(ok(self.repetition_penalty) && self.repetition_penalty >= 1.0) {
            return Err(Error::Config(format!(
                "repetition penalty must be at least 1, got {}",
                self.repetition_penalty
            )));
        }
        Ok(())
    }
}

/// Divide positive scores of already generated tokens by `penalty`, multiply
/// negative ones by it.
pub fn apply_repetition_penalty(scores: &mut [f64], generated: &[TokenId], penalty: f64) {
    if penalty == 1.0 {
        return;
    }
    let mut seen = vec![false; scores.len()];
    for &t in generated {
        if let Some(s) = seen.get_mut(t as usize) {
            *s = true;
        }
    }
    for (score, _) in scores.iter_mut().zip(&seen).filter(|(_, &s)| s) {
        if *score > 0.0 {
            *score /= penalty;
        } else {
            *score *= penalty;
        }
    }
}

/// Pre-softmax ensemble scores, repetition penalty included.
pub fn combined_scores(
    base: &LogProbVector,
    expert: &LogProbVector,
    antiexpert: &LogProbVector,
    weights: &EnsembleWeights,
    prefix: &[TokenId],
) -> Result<Vec<f64>> {
    weights.validate()?;
    let n = base.len();
    for other in [expert, antiexpert] {
        if other.len() != n {
            return Err(Error::shape(n, other.len()));
        }
    }
    let mut scores: Vec<f64> = base
        .values()
        .iter()
        .zip(expert.values())
        .zip(antiexpert.values())
        .map(|((z, zp), zm)| z / weights.base_temperature + weights.expert * zp - weights.antiexpert * zm)
        .collect();
    apply_repetition_penalty(&mut scores, prefix, weights.repetition_penalty);
    Ok(scores)
}

/// Ensembled next-token distribution.
pub fn ensemble_step(
    base: &LogProbVector,
    expert: &LogProbVector,
    antiexpert: &LogProbVector,
    weights: &EnsembleWeights,
    prefix: &[TokenId],
) -> Result<Distribution> {
    softmax(&combined_scores(base, expert, antiexpert, weights, prefix)?, 1.0)
}

/// Greedy choice: highest probability, lowest id on ties. MASK and BOS are
/// never emitted.
pub fn greedy_choice(dist: &Distribution) -> TokenId {
    let mut best: Option<(usize, f64)> = None;
    for (i, &p) in dist.probs().iter().enumerate() {
        if i as TokenId == MASK || i as TokenId == BOS {
            continue;
        }
        if best.is_none_or(|(_, bp)| p > bp) {
            best = Some((i, p));
        }
    }
    best.map_or(EOS, |(i, _)| i as TokenId)
}

/// Everything computed at one decoding step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeStep {
    pub base: LogProbVector,
    pub expert: LogProbVector,
    pub antiexpert: LogProbVector,
    pub combined: Vec<f64>,
    pub ensembled: Distribution,
    pub chosen: TokenId,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DecodeTrace {
    pub steps: Vec<DecodeStep>,
}

impl DecodeTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn ended_with_eos(&self) -> bool {
        self.steps.last().is_some_and(|s| s.chosen == EOS)
    }
}

/// The base, expert and anti-expert models of one rewriting run.
#[derive(Clone, Copy)]
pub struct ModelTriple<'a> {
    pub base: &'a dyn DenoisingLm,
    pub expert: &'a dyn DenoisingLm,
    pub antiexpert: &'a dyn DenoisingLm,
}

impl<'a> ModelTriple<'a> {
    pub fn new(
        base: &'a dyn DenoisingLm,
        expert: &'a dyn DenoisingLm,
        antiexpert: &'a dyn DenoisingLm,
    ) -> Self {
        ModelTriple {
            base,
            expert,
            antiexpert,
        }
    }

    pub fn check_vocabulary(&self) -> Result<()> {
        ensure_same_vocabulary(self.base.vocabulary(), &[self.expert, self.antiexpert])
    }
}

/// Generate a rewrite of `original` guided by its masked variant. Stops after
/// EOS or `max_len` steps; the returned sequence excludes EOS.
pub fn poe_rewrite(
    original: &TokenSequence,
    masked: &MaskedSequence,
    models: ModelTriple<'_>,
    weights: &EnsembleWeights,
    max_len: usize,
) -> Result<(TokenSequence, DecodeTrace)> {
    if original.is_empty() {
        return Err(Error::Input("cannot rewrite an empty sequence".into()));
    }
    if max_len == 0 {
        return Err(Error::Config("max_len must be at least 1".into()));
    }
    weights.validate()?;
    models.check_vocabulary()?;
    let vocab = models.base.vocabulary();
    original.check_vocabulary(vocab)?;

    let mut generated: Vec<TokenId> = Vec::new();
    let mut trace = DecodeTrace::default();
    for _ in 0..max_len {
        let base = models.base.next_token_logprobs(original.tokens(), &generated)?;
        let expert = models.expert.next_token_logprobs(masked.tokens(), &generated)?;
        let antiexpert = models.antiexpert.next_token_logprobs(masked.tokens(), &generated)?;
        for v in [&base, &expert, &antiexpert] {
            if v.len() != vocab.len() {
                return Err(Error::shape(vocab.len(), v.len()));
            }
        }
        let combined = combined_scores(&base, &expert, &antiexpert, weights, &generated)?;
        let ensembled = softmax(&combined, 1.0)?;
        let chosen = greedy_choice(&ensembled);
        trace.steps.push(DecodeStep {
            base,
            expert,
            antiexpert,
            combined,
            ensembled,
            chosen,
        });
        if chosen == EOS {
            break;
        }
        generated.push(chosen);
    }
    Ok((TokenSequence::new(generated)?, trace))
}
