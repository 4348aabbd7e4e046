// SPDX-License-Identifier: Apache-2.0

//! Contextual masking: mask the positions where expert and anti-expert infill
//! distributions disagree the most.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::{ensure_same_vocabulary, DenoisingLm};
use crate::par::Execution;
use crate::textcore::{symmetric_divergence, MaskedSequence, TokenSequence};

/// Below this mean raw distance nothing is masked.
pub const MEAN_EPSILON: f64 = 1e-12;

/// Default masking threshold on mean-normalized distances.
pub const DEFAULT_THRESHOLD: f64 = 1.2;

/// Per-position distances and the resulting mask set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceProfile {
    pub raw: Vec<f64>,
    /// `raw / mean(raw)`; all zeros when the mean is degenerate.
    pub normalized: Vec<f64>,
    pub threshold: f64,
    pub masked_indices: BTreeSet<usize>,
}

fn check_threshold(threshold: f64) -> Result<()> {
    if threshold > 0.0 && threshold.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "masking threshold must be positive, got {threshold}"
        )))
    }
}

/// Running mean; exact when all inputs are equal.
fn mean(values: &[f64]) -> f64 {
    let mut m = 0.0;
    for (i, &v) in values.iter().enumerate() {
        m += (v - m) / (i + 1) as f64;
    }
    m
}

impl DivergenceProfile {
    /// Normalize raw distances by their mean and select `normalized > threshold`.
    pub fn from_raw(raw: Vec<f64>, threshold: f64) -> Result<Self> {
        check_threshold(threshold)?;
        if let Some(d) = raw.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
            return Err(Error::NumericInput(format!("invalid raw distance {d}")));
        }
        let m = mean(&raw);
        let (normalized, masked_indices) = if m > MEAN_EPSILON {
            let normalized: Vec<f64> = raw.iter().map(|d| d / m).collect();
            let masked = normalized
                .iter()
                .enumerate()
                .filter(|(_, &n)| n > threshold)
                .map(|(i, _)| i)
                .collect();
            (normalized, masked)
        } else {
            (vec![0.0; raw.len()], BTreeSet::new())
        };
        Ok(DivergenceProfile {
            raw,
            normalized,
            threshold,
            masked_indices,
        })
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }
}

/// Raw expert/anti-expert distance at every position of `seq`.
pub fn divergence_profile_raw(
    seq: &TokenSequence,
    expert: &dyn DenoisingLm,
    antiexpert: &dyn DenoisingLm,
    exec: Execution,
) -> Result<Vec<f64>> {
    if seq.is_empty() {
        return Err(Error::Input("cannot mask an empty sequence".into()));
    }
    ensure_same_vocabulary(expert.vocabulary(), &[antiexpert])?;
    seq.check_vocabulary(expert.vocabulary())?;
    exec.try_map_range(seq.len(), |i| {
        let plus = expert.masked_position_distribution(seq.tokens(), i)?;
        let minus = antiexpert.masked_position_distribution(seq.tokens(), i)?;
        symmetric_divergence(&plus, &minus)
    })
}

/// [`contextual_mask_with`] with one MASK per position and default execution.
pub fn contextual_mask(
    seq: &TokenSequence,
    expert: &dyn DenoisingLm,
    antiexpert: &dyn DenoisingLm,
    threshold: f64,
) -> Result<(MaskedSequence, DivergenceProfile)> {
    contextual_mask_with(seq, expert, antiexpert, threshold, false, Execution::default())
}

pub fn contextual_mask_with(
    seq: &TokenSequence,
    expert: &dyn DenoisingLm,
    antiexpert: &dyn DenoisingLm,
    threshold: f64,
    collapse: bool,
    exec: Execution,
) -> Result<(MaskedSequence, DivergenceProfile)> {
    check_threshold(threshold)?;
    let raw = divergence_profile_raw(seq, expert, antiexpert, exec)?;
    let profile = DivergenceProfile::from_raw(raw, threshold)?;
    let masked = MaskedSequence::mask(seq, &profile.masked_indices, collapse)?;
    Ok((masked, profile))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{train_ngram, NGramParams, TableLm};
    use crate::textcore::{Distribution, Vocabulary, VocabularyBuilder, MASK};

    fn vocab() -> Vocabulary {
        let mut b = VocabularyBuilder::new();
        b.encode("p q r s");
        b.finish().unwrap()
    }

    fn dist(v: &[f64]) -> Distribution {
        Distribution::from_weights(v.to_vec()).unwrap()
    }

    /// Experts agreeing everywhere except at `hot`.
    fn fixture(seq: &[u32], hot: usize) -> (TableLm, TableLm) {
        let v = vocab();
        let (mut plus, mut minus) = (TableLm::new(v.clone()), TableLm::new(v));
        let calm = dist(&[0.0, 0.0, 0.0, 0.1, 0.3, 0.2, 0.2, 0.2]);
        for i in 0..seq.len() {
            if i == hot {
                plus.insert_infill(seq, i, dist(&[0.0, 0.0, 0.0, 0.1, 0.6, 0.1, 0.1, 0.1])).unwrap();
                minus.insert_infill(seq, i, dist(&[0.0, 0.0, 0.0, 0.1, 0.1, 0.1, 0.1, 0.6])).unwrap();
            } else {
                plus.insert_infill(seq, i, calm.clone()).unwrap();
                minus.insert_infill(seq, i, calm.clone()).unwrap();
            }
        }
        (plus, minus)
    }

    #[test]
    fn identical_experts_mask_nothing() {
        let v = vocab();
        let corpus = vec![TokenSequence::new(v.encode("p q r s p")).unwrap()];
        let m = train_ngram(&v, &corpus, NGramParams::default()).unwrap();
        let seq = TokenSequence::new(v.encode("p q r")).unwrap();
        let (masked, profile) = contextual_mask(&seq, &m, &m, 1.2).unwrap();
        assert!(profile.raw.iter().all(|&d| d == 0.0));
        assert!(profile.masked_indices.is_empty());
        assert_eq!(masked.tokens(), seq.tokens());
    }

    #[test]
    fn single_hot_position_normalizes_to_three() {
        let seq = TokenSequence::new(vec![4, 5, 6]).unwrap();
        let (plus, minus) = fixture(seq.tokens(), 2);
        let (masked, profile) = contextual_mask(&seq, &plus, &minus, 1.2).unwrap();
        assert_eq!(profile.raw[0], 0.0);
        assert_eq!(profile.raw[1], 0.0);
        assert!(profile.raw[2] > 0.0);
        assert_eq!(profile.normalized[..2], [0.0, 0.0]);
        assert!((profile.normalized[2] - 3.0).abs() < 1e-12);
        assert_eq!(profile.masked_indices.iter().copied().collect::<Vec<_>>(), vec![2]);
        assert_eq!(masked.tokens(), &[4, 5, MASK]);
    }

    #[test]
    fn equal_distances_normalize_to_exactly_one() {
        let p = DivergenceProfile::from_raw(vec![0.37; 7], 1.2).unwrap();
        assert!(p.normalized.iter().all(|&n| n == 1.0));
        assert!(p.masked_indices.is_empty());
    }

    #[test]
    fn threshold_is_strict() {
        // mean 1, so normalized == raw
        let p = DivergenceProfile::from_raw(vec![1.5, 0.5, 1.0], 1.5).unwrap();
        assert!(p.masked_indices.is_empty());
        let p = DivergenceProfile::from_raw(vec![1.5, 0.5, 1.0], 1.49).unwrap();
        assert_eq!(p.masked_indices.len(), 1);
    }

    #[test]
    fn degenerate_mean_masks_nothing() {
        let p = DivergenceProfile::from_raw(vec![0.0, 1e-13, 0.0], 1.2).unwrap();
        assert!(p.masked_indices.is_empty());
    }

    #[test]
    fn rejects_bad_threshold_and_empty_input() {
        assert!(matches!(DivergenceProfile::from_raw(vec![1.0], 0.0), Err(Error::Config(_))));
        let v = vocab();
        let m = TableLm::new(v);
        let empty = TokenSequence::new(vec![]).unwrap();
        assert!(contextual_mask(&empty, &m, &m, 1.2).is_err());
    }

    #[test]
    fn vocabulary_mismatch_is_config_error() {
        let mut b = VocabularyBuilder::new();
        b.encode("other words");
        let (plus, _) = fixture(&[4, 5], 0);
        let other = TableLm::new(b.finish().unwrap());
        let seq = TokenSequence::new(vec![4, 5]).unwrap();
        assert!(matches!(contextual_mask(&seq, &plus, &other, 1.2), Err(Error::Config(_))));
    }

    #[test]
    fn collapse_mode_merges_runs() {
        let p = DivergenceProfile::from_raw(vec![1.0, 1.0, 0.0, 0.0], 1.2).unwrap();
        assert_eq!(p.masked_indices.len(), 2);
        let seq4 = TokenSequence::new(vec![4, 5, 6, 7]).unwrap();
        let m = MaskedSequence::mask(&seq4, &p.masked_indices, true).unwrap();
        assert_eq!(m.tokens(), &[MASK, 6, 7]);
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let seq = TokenSequence::new(vec![4, 5, 6, 7, 4]).unwrap();
        let (plus, minus) = fixture(seq.tokens(), 3);
        let a = contextual_mask_with(&seq, &plus, &minus, 1.2, false, Execution::Sequential).unwrap();
        let b = contextual_mask_with(&seq, &plus, &minus, 1.2, false, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }
}
