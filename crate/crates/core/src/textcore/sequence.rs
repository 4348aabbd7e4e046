// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::vocab::{TokenId, Vocabulary, MASK};
use crate::error::{Error, Result};

/// Unmasked token ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<TokenId>", into = "Vec<TokenId>")]
pub struct TokenSequence(Vec<TokenId>);

impl TokenSequence {
    pub fn new(tokens: Vec<TokenId>) -> Result<Self> {
        if let Some(pos) = tokens.iter().position(|&t| t == MASK) {
            return Err(Error::Input(format!(
                "token sequence holds MASK at position {pos}"
            )));
        }
        Ok(TokenSequence(tokens))
    }

    /// Tokenize against a fixed vocabulary; unknown words become UNK.
    pub fn encode(vocab: &Vocabulary, text: &str) -> Result<Self> {
        Self::new(vocab.encode(text))
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn check_vocabulary(&self, vocab: &Vocabulary) -> Result<()> {
        match self.0.iter().find(|&&t| t as usize >= vocab.len()) {
            Some(t) => Err(Error::Input(format!(
                "token id {t} outside vocabulary of size {}",
                vocab.len()
            ))),
            None => Ok(()),
        }
    }
}

impl TryFrom<Vec<TokenId>> for TokenSequence {
    type Error = Error;

    fn try_from(tokens: Vec<TokenId>) -> Result<Self> {
        Self::new(tokens)
    }
}

impl From<TokenSequence> for Vec<TokenId> {
    fn from(seq: TokenSequence) -> Self {
        seq.0
    }
}

/// A sequence in which some positions hold MASK.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedSequence {
    tokens: Vec<TokenId>,
    masked_indices: BTreeSet<usize>,
}

impl MaskedSequence {
    /// Wrap raw ids; the masked set is derived from where MASK occurs.
    pub fn from_tokens(tokens: Vec<TokenId>) -> Self {
        let masked_indices = tokens
            .iter()
            .enumerate()
            .filter(|(_, &t)| t == MASK)
            .map(|(i, _)| i)
            .collect();
        MaskedSequence {
            tokens,
            masked_indices,
        }
    }

    /// Replace each position in `indices` with MASK. With `collapse`, every
    /// run of adjacent masked positions becomes a single MASK.
    pub fn mask(source: &TokenSequence, indices: &BTreeSet<usize>, collapse: bool) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= source.len()) {
            return Err(Error::Index {
                position: bad,
                len: source.len(),
            });
        }
        let mut tokens = Vec::with_capacity(source.len());
        for (i, &t) in source.tokens().iter().enumerate() {
            if indices.contains(&i) {
                if collapse && i > 0 && indices.contains(&(i - 1)) {
                    continue;
                }
                tokens.push(MASK);
            } else {
                tokens.push(t);
            }
        }
        Ok(Self::from_tokens(tokens))
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    pub fn masked_indices(&self) -> &BTreeSet<usize> {
        &self.masked_indices
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn render(&self, vocab: &Vocabulary) -> String {
        vocab.decode(&self.tokens)
    }
}
