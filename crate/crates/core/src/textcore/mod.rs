// SPDX-License-Identifier: Apache-2.0

//! Vocabulary, token sequences, probability vectors and the numeric kernels
//! shared by every other module.

mod kernels;
mod sequence;
mod vocab;

pub use kernels::{
    kl_divergence, log_softmax, softmax, symmetric_divergence, Distribution, LogProbVector,
    EPSILON_FLOOR,
};
pub use sequence::{MaskedSequence, TokenSequence};
pub use vocab::{TokenId, Vocabulary, VocabularyBuilder, BOS, EOS, MASK, RESERVED_TOKENS, UNK};
