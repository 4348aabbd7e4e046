// SPDX-License-Identifier: Apache-2.0

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{check_decode_query, check_infill_query, DenoisingLm};
use crate::error::{Error, Result};
use crate::textcore::{Distribution, LogProbVector, TokenId, Vocabulary, MASK};

/// What a [`TableLm`] answers for a query it has no entry for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fallback {
    #[default]
    Error,
    Uniform,
}

/// Deterministic lookup-table model used for fixtures.
///
/// Infill keys are stored with the queried position replaced by MASK, so the
/// answer never depends on the token being predicted.
#[derive(Debug, Clone)]
pub struct TableLm {
    vocab: Vocabulary,
    fallback: Fallback,
    infill: HashMap<InfillKey, Distribution>,
    decode: HashMap<DecodeKey, LogProbVector>,
}

type InfillKey = (Vec<TokenId>, usize);
type DecodeKey = (Vec<TokenId>, Vec<TokenId>);

fn infill_key(seq: &[TokenId], position: usize) -> InfillKey {
    let mut key = seq.to_vec();
    key[position] = MASK;
    (key, position)
}

impl TableLm {
    pub fn new(vocab: Vocabulary) -> Self {
        TableLm {
            vocab,
            fallback: Fallback::Error,
            infill: HashMap::new(),
            decode: HashMap::new(),
        }
    }

    pub fn with_fallback(mut self, fallback: Fallback) -> Self {
        self.fallback = fallback;
        self
    }

    pub fn fallback(&self) -> Fallback {
        self.fallback
    }

    pub fn insert_infill(&mut self, seq: &[TokenId], position: usize, dist: Distribution) -> Result<()> {
        check_infill_query(&self.vocab, seq, position)?;
        if dist.len() != self.vocab.len() {
            return Err(Error::shape(self.vocab.len(), dist.len()));
        }
        self.infill.insert(infill_key(seq, position), dist);
        Ok(())
    }

    pub fn insert_decode(
        &mut self,
        condition: &[TokenId],
        prefix: &[TokenId],
        logprobs: LogProbVector,
    ) -> Result<()> {
        check_decode_query(&self.vocab, condition, prefix)?;
        if logprobs.len() != self.vocab.len() {
            return Err(Error::shape(self.vocab.len(), logprobs.len()));
        }
        self.decode
            .insert((condition.to_vec(), prefix.to_vec()), logprobs);
        Ok(())
    }

    /// Entries in a stable order, for persistence.
    pub(crate) fn infill_entries(&self) -> Vec<(&InfillKey, &Distribution)> {
        let mut v: Vec<_> = self.infill.iter().collect();
        v.sort_by(|a, b| a.0.cmp(b.0));
        v
    }

    pub(crate) fn decode_entries(&self) -> Vec<(&DecodeKey, &LogProbVector)> {
        let mut v: Vec<_> = self.decode.iter().collect();
        v.sort_by(|a, b| a.0.cmp(b.0));
        v
    }
}

impl DenoisingLm for TableLm {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn masked_position_distribution(&self, seq: &[TokenId], position: usize) -> Result<Distribution> {
        check_infill_query(&self.vocab, seq, position)?;
        match (self.infill.get(&infill_key(seq, position)), self.fallback) {
            (Some(d), _) => Ok(d.clone()),
            (None, Fallback::Uniform) => Ok(Distribution::uniform(self.vocab.len())),
            (None, Fallback::Error) => Err(Error::Fixture(format!(
                "no infill entry for {} at position {position}",
                self.vocab.decode(seq)
            ))),
        }
    }

    fn next_token_logprobs(&self, condition: &[TokenId], prefix: &[TokenId]) -> Result<LogProbVector> {
        check_decode_query(&self.vocab, condition, prefix)?;
        match (
            self.decode.get(&(condition.to_vec(), prefix.to_vec())),
            self.fallback,
        ) {
            (Some(l), _) => Ok(l.clone()),
            (None, Fallback::Uniform) => Ok(Distribution::uniform(self.vocab.len()).to_log_probs()),
            (None, Fallback::Error) => Err(Error::Fixture(format!(
                "no decode entry for condition {:?} prefix {:?}",
                self.vocab.decode(condition),
                self.vocab.decode(prefix)
            ))),
        }
    }
}
