// SPDX-License-Identifier: Apache-2.0

//! Small deterministic table models for tests, demos and oracle checks.

use crate::lm::TableLm;
use crate::textcore::{Distribution, LogProbVector, TokenId, TokenSequence, Vocabulary, EOS, MASK};

/// Models for the three-token input `x toxic y`. The expert pair disagrees
/// only at position 1; the base copies its input; at the masked step the
/// pair steers toward `benign`.
pub struct DetoxFixture {
    pub vocab: Vocabulary,
    pub base: TableLm,
    pub expert: TableLm,
    pub antiexpert: TableLm,
    pub original: TokenSequence,
    /// What greedy decoding should emit.
    pub expected: TokenSequence,
}

fn peaked(n: usize, peaks: &[(TokenId, f64)]) -> Vec<f64> {
    let taken: f64 = peaks.iter().map(|(_, p)| p).sum();
    let rest = (1.0 - taken) / (n - peaks.len()) as f64;
    let mut p = vec![rest; n];
    for &(t, q) in peaks {
        p[t as usize] = q;
    }
    p
}

fn dist(p: Vec<f64>) -> Distribution {
    Distribution::from_weights(p).expect("fixture weights are valid")
}

fn logprobs(p: Vec<f64>) -> LogProbVector {
    dist(p).to_log_probs()
}

pub fn detox_fixture() -> DetoxFixture {
    let entries = ["<mask>", "<s>", "</s>", "<unk>", "x", "toxic", "y", "benign"];
    let vocab = Vocabulary::from_entries(entries.iter().map(|s| s.to_string()).collect()).expect("fixture vocabulary");
    let id = |w: &str| vocab.lookup(w).expect("fixture word");
    let (x, toxic, y, benign) = (id("x"), id("toxic"), id("y"), id("benign"));
    let n = vocab.len();
    let w = vec![x, toxic, y];
    let masked = vec![x, MASK, y];
    let g = vec![x, benign, y];

    let mut base = TableLm::new(vocab.clone());
    let mut expert = TableLm::new(vocab.clone());
    let mut anti = TableLm::new(vocab.clone());

    for (pos, &t) in w.iter().enumerate() {
        if pos == 1 {
            expert.insert_infill(&w, pos, dist(peaked(n, &[(benign, 0.8), (toxic, 0.05)]))).unwrap();
            anti.insert_infill(&w, pos, dist(peaked(n, &[(toxic, 0.8), (benign, 0.05)]))).unwrap();
        } else {
            let d = dist(peaked(n, &[(t, 0.9)]));
            expert.insert_infill(&w, pos, d.clone()).unwrap();
            anti.insert_infill(&w, pos, d).unwrap();
        }
    }

    // decoding steps along the expected path, ending with EOS
    for step in 0..=g.len() {
        let prefix = &g[..step];
        let copy = w.get(step).copied().unwrap_or(EOS);
        base.insert_decode(&w, prefix, logprobs(peaked(n, &[(copy, 0.9)]))).unwrap();
        if step == 1 {
            expert.insert_decode(&masked, prefix, logprobs(peaked(n, &[(benign, 0.9), (toxic, 0.01)]))).unwrap();
            anti.insert_decode(&masked, prefix, logprobs(peaked(n, &[(toxic, 0.9), (benign, 0.01)]))).unwrap();
        } else {
            let target = g.get(step).copied().unwrap_or(EOS);
            expert.insert_decode(&masked, prefix, logprobs(peaked(n, &[(target, 0.99)]))).unwrap();
            anti.insert_decode(&masked, prefix, logprobs(peaked(n, &[(target, 0.5)]))).unwrap();
        }
    }

    DetoxFixture {
        vocab,
        base,
        expert,
        antiexpert: anti,
        original: TokenSequence::new(w).unwrap(),
        expected: TokenSequence::new(g).unwrap(),
    }
}
