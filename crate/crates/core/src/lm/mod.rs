// SPDX-License-Identifier: Apache-2.0

//! The denoising language-model contract and its built-in implementations.

mod file;
mod ngram;
mod table;

pub use file::{load_model, LocalModel};
pub use ngram::{train_ngram, CountTable, NGramInfillLm, NGramParams};
pub use table::{Fallback, TableLm};

use crate::error::{Error, Result};
use crate::textcore::{Distribution, LogProbVector, TokenId, Vocabulary};

/// A denoising autoencoder LM reduced to the two queries mask-and-replace
/// rewriting needs.
pub trait DenoisingLm: Send + Sync {
    fn vocabulary(&self) -> &Vocabulary;

    /// Distribution over the token at `position`, given bidirectional context
    /// with that position masked. The token currently stored there is ignored.
    fn masked_position_distribution(&self, seq: &[TokenId], position: usize) -> Result<Distribution>;

    /// Normalized next-token log-probabilities given the encoder-side
    /// `condition` and the tokens generated so far.
    fn next_token_logprobs(&self, condition: &[TokenId], prefix: &[TokenId]) -> Result<LogProbVector>;
}

impl<M: DenoisingLm + ?Sized> DenoisingLm for &M {
    fn vocabulary(&self) -> &Vocabulary {
        (**self).vocabulary()
    }

    fn masked_position_distribution(&self, seq: &[TokenId], position: usize) -> Result<Distribution> {
        (**self).masked_position_distribution(seq, position)
    }

    fn next_token_logprobs(&self, condition: &[TokenId], prefix: &[TokenId]) -> Result<LogProbVector> {
        (**self).next_token_logprobs(condition, prefix)
    }
}

impl<M: DenoisingLm + ?Sized> DenoisingLm for Box<M> {
    fn vocabulary(&self) -> &Vocabulary {
        (**self).vocabulary()
    }

    fn masked_position_distribution(&self, seq: &[TokenId], position: usize) -> Result<Distribution> {
        (**self).masked_position_distribution(seq, position)
    }

    fn next_token_logprobs(&self, condition: &[TokenId], prefix: &[TokenId]) -> Result<LogProbVector> {
        (**self).next_token_logprobs(condition, prefix)
    }
}

impl<M: DenoisingLm + ?Sized> DenoisingLm for std::sync::Arc<M> {
    fn vocabulary(&self) -> &Vocabulary {
        (**self).vocabulary()
    }

    fn masked_position_distribution(&self, seq: &[TokenId], position: usize) -> Result<Distribution> {
        (**self).masked_position_distribution(seq, position)
    }

    fn next_token_logprobs(&self, condition: &[TokenId], prefix: &[TokenId]) -> Result<LogProbVector> {
        (**self).next_token_logprobs(condition, prefix)
    }
}

pub(crate) fn check_ids(vocab: &Vocabulary, ids: &[TokenId]) -> Result<()> {
    match ids.iter().find(|&&t| t as usize >= vocab.len()) {
        Some(t) => Err(Error::Input(format!(
            "token id {t} outside vocabulary of size {}",
            vocab.len()
        ))),
        None => Ok(()),
    }
}

pub(crate) fn check_infill_query(vocab: &Vocabulary, seq: &[TokenId], position: usize) -> Result<()> {
    if position >= seq.len() {
        return Err(Error::Index {
            position,
            len: seq.len(),
        });
    }
    check_ids(vocab, seq)
}

pub(crate) fn check_decode_query(
    vocab: &Vocabulary,
    condition: &[TokenId],
    prefix: &[TokenId],
) -> Result<()> {
    if condition.is_empty() {
        return Err(Error::Input("empty condition sequence".into()));
    }
    check_ids(vocab, condition)?;
    check_ids(vocab, prefix)
}

/// Fails unless every model shares `vocab`.
pub fn ensure_same_vocabulary(vocab: &Vocabulary, models: &[&dyn DenoisingLm]) -> Result<()> {
    for m in models {
        if m.vocabulary().checksum() != vocab.checksum() {
            return Err(Error::Config(format!(
                "vocabulary mismatch: {} vs {}",
                &vocab.checksum()[..12],
                &m.vocabulary().checksum()[..12]
            )));
        }
    }
    Ok(())
}
