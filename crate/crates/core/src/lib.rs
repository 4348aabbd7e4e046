// SPDX-License-Identifier: Apache-2.0

//! Unsupervised text detoxification by masking and replacing.
//!
//! An expert LM (trained on benign text) and an anti-expert (trained on toxic
//! text) are queried at every position of the input; positions where their
//! infill distributions disagree are masked. A base LM then regenerates the
//! text greedily while the pair steers it through a product of experts.
//!
//! ```
//! use marco::lm::{train_ngram, NGramParams};
//! use marco::rewriter::{rewrite, RewriteConfig};
//! use marco::decoder::ModelTriple;
//! use marco::textcore::{TokenSequence, VocabularyBuilder};
//!
//! let mut vocab = VocabularyBuilder::new();
//! let clean = vec![vocab.encode("you are kind"), vocab.encode("you are smart")];
//! let toxic = vec![vocab.encode("you are dumb"), vocab.encode("you are awful")];
//! let vocab = vocab.finish().unwrap();
//! let seqs = |v: Vec<Vec<u32>>| -> Vec<TokenSequence> {
//!     v.into_iter().map(|t| TokenSequence::new(t).unwrap()).collect()
//! };
//! let (clean, toxic) = (seqs(clean), seqs(toxic));
//! let all: Vec<_> = clean.iter().chain(&toxic).cloned().collect();
//!
//! let base = train_ngram(&vocab, &all, NGramParams::default()).unwrap();
//! let expert = train_ngram(&vocab, &clean, NGramParams::default()).unwrap();
//! let anti = train_ngram(&vocab, &toxic, NGramParams::default()).unwrap();
//!
//! let config = RewriteConfig { alpha1: 1.5, alpha2: 1.5, temperature: 2.5, ..Default::default() };
//! let result = rewrite(&toxic[0], ModelTriple::new(&base, &expert, &anti), &config).unwrap();
//! println!("{}", vocab.decode(result.rewrite.tokens()));
//! ```

pub mod corpus;
pub mod decoder;
pub mod error;
pub mod fixtures;
pub mod lm;
pub mod masker;
pub mod metrics;
pub mod net;
pub mod par;
pub mod rewriter;
pub mod textcore;

pub use error::{Error, Result};
pub use par::Execution;
