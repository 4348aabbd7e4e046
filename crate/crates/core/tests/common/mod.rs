// SPDX-License-Identifier: Apache-2.0

#![allow(dead_code)]

use marco::lm::{train_ngram, NGramInfillLm, NGramParams};
use marco::textcore::{TokenSequence, Vocabulary, VocabularyBuilder};

pub fn seqs(ids: Vec<Vec<u32>>) -> Vec<TokenSequence> {
    ids.into_iter().map(|t| TokenSequence::new(t).unwrap()).collect()
}

/// A small trained model over a fixed toy corpus.
pub fn toy_model() -> (Vocabulary, NGramInfillLm) {
    let mut b = VocabularyBuilder::new();
    let ids: Vec<_> = [
        "the cat sat on the mat",
        "the dog sat on the rug",
        "a cat ran to the dog",
        "the mat was red",
    ]
    .iter()
    .map(|t| b.encode(t))
    .collect();
    let v = b.finish().unwrap();
    let m = train_ngram(&v, &seqs(ids), NGramParams { order: 3, ..NGramParams::default() }).unwrap();
    (v, m)
}
