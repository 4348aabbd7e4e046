// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use super::{check_decode_query, check_ids, check_infill_query, DenoisingLm};
use crate::error::{Error, Result};
use crate::textcore::{Distribution, LogProbVector, TokenId, TokenSequence, Vocabulary, BOS, EOS, MASK};

/// Training hyperparameters for [`NGramInfillLm`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NGramParams {
    pub order: usize,
    /// Add-k smoothing constant.
    pub k: f64,
    /// Weight of the copy distribution in next-token scoring.
    pub copy_weight: f64,
}

impl Default for NGramParams {
    fn default() -> Self {
        NGramParams {
            order: 2,
            k: 0.1,
            copy_weight: 0.7,
        }
    }
}

impl NGramParams {
    pub fn validate(&self) -> Result<()> {
        if self.order < 1 {
            return Err(Error::Config("n-gram order must be at least 1".into()));
        }
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(Error::Config(format!("smoothing k must be positive, got {}", self.k)));
        }
        if !(0.0..=1.0).contains(&self.copy_weight) {
            return Err(Error::Config(format!(
                "copy weight must lie in [0, 1], got {}",
                self.copy_weight
            )));
        }
        Ok(())
    }
}

/// Context → (next token → count).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CountTable {
    contexts: BTreeMap<Vec<TokenId>, ContextCounts>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct ContextCounts {
    total: u64,
    next: BTreeMap<TokenId, u64>,
}

impl CountTable {
    pub fn add(&mut self, context: &[TokenId], token: TokenId, count: u64) {
        let entry = self.contexts.entry(context.to_vec()).or_default();
        entry.total += count;
        *entry.next.entry(token).or_default() += count;
    }

    pub fn count(&self, context: &[TokenId], token: TokenId) -> u64 {
        self.contexts
            .get(context)
            .and_then(|c| c.next.get(&token))
            .copied()
            .unwrap_or(0)
    }

    pub fn context_total(&self, context: &[TokenId]) -> u64 {
        self.contexts.get(context).map_or(0, |c| c.total)
    }

    /// `(context, [(token, count)])` in sorted order.
    pub fn iter(&self) -> impl Iterator<Item = (&[TokenId], Vec<(TokenId, u64)>)> + '_ {
        self.contexts.iter().map(|(ctx, c)| {
            (
                ctx.as_slice(),
                c.next.iter().map(|(&t, &n)| (t, n)).collect(),
            )
        })
    }

    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }
}

/// Word n-gram infilling model with a positional copy bias.
///
/// Infill queries multiply a left-to-right prediction from the left context by
/// a right-to-left prediction from the right context. Next-token queries mix a
/// point mass on the aligned condition token (weight `copy_weight`) with the
/// forward n-gram over the generated prefix.
///
/// Forward predictions never place mass on MASK or BOS; backward predictions
/// never on MASK or EOS.
#[derive(Debug, Clone, PartialEq)]
pub struct NGramInfillLm {
    vocab: Vocabulary,
    params: NGramParams,
    forward: CountTable,
    backward: CountTable,
}

pub fn train_ngram(
    vocab: &Vocabulary,
    corpus: &[TokenSequence],
    params: NGramParams,
) -> Result<NGramInfillLm> {
    params.validate()?;
    if corpus.is_empty() {
        return Err(Error::Training("empty training corpus".into()));
    }
    let ctx_len = params.order - 1;
    let mut forward = CountTable::default();
    let mut backward = CountTable::default();
    for sentence in corpus {
        check_ids(vocab, sentence.tokens())?;
        let tokens = sentence.tokens();

        let mut padded = vec![BOS; ctx_len];
        padded.extend_from_slice(tokens);
        padded.push(EOS);
        for j in ctx_len..padded.len() {
            forward.add(&padded[j - ctx_len..j], padded[j], 1);
        }

        let mut padded = vec![BOS];
        padded.extend_from_slice(tokens);
        padded.extend(std::iter::repeat_n(EOS, ctx_len));
        for j in 0..=tokens.len() {
            backward.add(&padded[j + 1..j + 1 + ctx_len], padded[j], 1);
        }
    }
    NGramInfillLm::from_counts(vocab.clone(), params, forward, backward)
}

impl NGramInfillLm {
    pub fn from_counts(
        vocab: Vocabulary,
        params: NGramParams,
        forward: CountTable,
        backward: CountTable,
    ) -> Result<Self> {
        params.validate()?;
        let ctx_len = params.order - 1;
        for (name, table) in [("forward", &forward), ("backward", &backward)] {
            for (ctx, next) in table.iter() {
                if ctx.len() != ctx_len {
                    return Err(Error::Format(format!(
                        "{name} context of length {} in an order-{} model",
                        ctx.len(),
                        params.order
                    )));
                }
                check_ids(&vocab, ctx).map_err(|e| Error::Format(e.to_string()))?;
                for (t, _) in next {
                    check_ids(&vocab, &[t]).map_err(|e| Error::Format(e.to_string()))?;
                }
            }
        }
        Ok(NGramInfillLm {
            vocab,
            params,
            forward,
            backward,
        })
    }

    pub fn params(&self) -> NGramParams {
        self.params
    }

    pub fn order(&self) -> usize {
        self.params.order
    }

    pub fn forward_counts(&self) -> &CountTable {
        &self.forward
    }

    pub fn backward_counts(&self) -> &CountTable {
        &self.backward
    }

    /// Copy of this model with a different copy weight.
    pub fn with_copy_weight(&self, copy_weight: f64) -> Result<Self> {
        let params = NGramParams {
            copy_weight,
            ..self.params
        };
        params.validate()?;
        Ok(NGramInfillLm {
            params,
            ..self.clone()
        })
    }

    fn smoothed_row(&self, table: &CountTable, context: &[TokenId], boundary: TokenId) -> Vec<f64> {
        let v = self.vocab.len();
        let support = (v - 2) as f64;
        let k = self.params.k;
        let denom = table.context_total(context) as f64 + k * support;
        (0..v as TokenId)
            .map(|t| {
                if t == MASK || t == boundary {
                    0.0
                } else {
                    (table.count(context, t) as f64 + k) / denom
                }
            })
            .collect()
    }

    fn left_context(&self, tokens: &[TokenId], position: usize) -> Vec<TokenId> {
        let ctx_len = self.params.order - 1;
        (0..ctx_len)
            .map(|j| {
                let back = ctx_len - j;
                if position >= back {
                    tokens[position - back]
                } else {
                    BOS
                }
            })
            .collect()
    }

    fn right_context(&self, tokens: &[TokenId], position: usize) -> Vec<TokenId> {
        let ctx_len = self.params.order - 1;
        (1..=ctx_len)
            .map(|j| tokens.get(position + j).copied().unwrap_or(EOS))
            .collect()
    }

    /// Smoothed left-to-right distribution of the token following `history`.
    pub fn forward_distribution(&self, history: &[TokenId]) -> Vec<f64> {
        let ctx = self.left_context(history, history.len());
        self.smoothed_row(&self.forward, &ctx, BOS)
    }

    /// −ln P(token | history) under the forward n-gram.
    pub fn forward_neg_log_prob(&self, history: &[TokenId], token: TokenId) -> f64 {
        let ctx = self.left_context(history, history.len());
        let k = self.params.k;
        let support = (self.vocab.len() - 2) as f64;
        if token == MASK || token == BOS {
            return -crate::textcore::EPSILON_FLOOR.ln();
        }
        let p = (self.forward.count(&ctx, token) as f64 + k)
            / (self.forward.context_total(&ctx) as f64 + k * support);
        -p.ln()
    }
}

impl DenoisingLm for NGramInfillLm {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn masked_position_distribution(&self, seq: &[TokenId], position: usize) -> Result<Distribution> {
        check_infill_query(&self.vocab, seq, position)?;
        let left = self.left_context(seq, position);
        let right = self.right_context(seq, position);
        let fwd = self.smoothed_row(&self.forward, &left, BOS);
        let bwd = self.smoothed_row(&self.backward, &right, EOS);
        Distribution::from_weights(fwd.iter().zip(&bwd).map(|(f, b)| f * b).collect())
    }

    fn next_token_logprobs(&self, condition: &[TokenId], prefix: &[TokenId]) -> Result<LogProbVector> {
        check_decode_query(&self.vocab, condition, prefix)?;
        let v = self.vocab.len();
        let lambda = self.params.copy_weight;
        let copy = match condition.get(prefix.len()) {
            Some(&t) if t != MASK => {
                let mut point = vec![0.0; v];
                point[t as usize] = 1.0;
                Distribution::new(point)?.smoothed()
            }
            _ => Distribution::uniform(v),
        };
        let fwd = self.forward_distribution(prefix);
        let mix: Vec<f64> = copy
            .probs()
            .iter()
            .zip(&fwd)
            .map(|(c, f)| lambda * c + (1.0 - lambda) * f)
            .collect();
        Ok(Distribution::from_weights(mix)?.to_log_probs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textcore::{symmetric_divergence, VocabularyBuilder, UNK};

    fn corpus(texts: &[&str]) -> (Vocabulary, Vec<TokenSequence>) {
        let mut b = VocabularyBuilder::new();
        let ids: Vec<Vec<TokenId>> = texts.iter().map(|t| b.encode(t)).collect();
        let v = b.finish().unwrap();
        (v, ids.into_iter().map(|s| TokenSequence::new(s).unwrap()).collect())
    }

    fn params(order: usize, copy_weight: f64) -> NGramParams {
        NGramParams {
            order,
            k: 0.1,
            copy_weight,
        }
    }

    #[test]
    fn direct_bigram_counts() {
        let (v, c) = corpus(&["a b"]);
        let m = train_ngram(&v, &c, params(2, 0.7)).unwrap();
        let (a, b) = (4, 5);
        assert_eq!(m.forward_counts().count(&[a], b), 1);
        assert_eq!(m.forward_counts().count(&[BOS], a), 1);
        assert_eq!(m.forward_counts().count(&[b], EOS), 1);
        assert_eq!(m.backward_counts().count(&[b], a), 1);
        assert_eq!(m.backward_counts().count(&[a], BOS), 1);
    }

    #[test]
    fn hand_counted_infill_abab() {
        // vocab: 4 reserved + a, b; support size 4, k = 0.1
        // forward P(.|a): b = 2.1/2.4, a = UNK = EOS = 0.1/2.4
        // backward P(.|a): b = BOS = 1.1/2.4, a = UNK = 0.1/2.4
        // product restricted to {UNK, a, b}: 0.01, 0.01, 2.31 → /2.33
        let (v, c) = corpus(&["a b a b"]);
        let m = train_ngram(&v, &c, params(2, 0.7)).unwrap();
        let d = m.masked_position_distribution(&[4, MASK, 4], 1).unwrap();
        let expected = [0.0, 0.0, 0.0, 1.0 / 233.0, 1.0 / 233.0, 231.0 / 233.0];
        for (got, want) in d.probs().iter().zip(expected) {
            assert!((got - want).abs() < 1e-12, "{:?}", d.probs());
        }
        assert_eq!(d.argmax(), 5);
    }

    #[test]
    fn hand_counted_forward_only() {
        let (v, c) = corpus(&["a b a b"]);
        let m = train_ngram(&v, &c, params(2, 0.0)).unwrap();
        let l = m.next_token_logprobs(&[4, 5], &[4]).unwrap();
        assert_eq!(l.argmax(), 5);
        assert!((l.values()[5] - (2.1f64 / 2.4).ln()).abs() < 1e-8);
        assert!((l.values()[UNK as usize] - (0.1f64 / 2.4).ln()).abs() < 1e-8);
    }

    #[test]
    fn pure_copy_follows_condition() {
        let (v, c) = corpus(&["a b c"]);
        let m = train_ngram(&v, &c, params(2, 1.0)).unwrap();
        let l = m.next_token_logprobs(&[4, 5, 6], &[4]).unwrap();
        assert_eq!(l.argmax(), 5);
        let l = m.next_token_logprobs(&[4, MASK, 6], &[4]).unwrap();
        let u = (1.0 / v.len() as f64).ln();
        assert!(l.values().iter().all(|x| (x - u).abs() < 1e-12));
    }

    #[test]
    fn greedy_copy_reproduces_condition() {
        let (v, c) = corpus(&["the cat sat on a mat", "a dog ran"]);
        let m = train_ngram(&v, &c, params(2, 1.0)).unwrap();
        let condition = v.encode("mat the dog sat sat");
        let mut prefix = Vec::new();
        for _ in 0..condition.len() {
            let l = m.next_token_logprobs(&condition, &prefix).unwrap();
            prefix.push(l.argmax() as TokenId);
        }
        assert_eq!(prefix, condition);
    }

    #[test]
    fn duplicated_corpus_gives_identical_conditionals() {
        let (v, c) = corpus(&["a b c", "b a", "c c a b"]);
        let doubled: Vec<_> = c.iter().chain(c.iter()).cloned().collect();
        let m1 = train_ngram(&v, &c, params(2, 0.7)).unwrap();
        let m2 = train_ngram(&v, &doubled, params(2, 0.7)).unwrap();
        // add-k is not scale invariant, so compare unsmoothed ratios instead
        for (ctx, next) in m1.forward_counts().iter() {
            let t1 = m1.forward_counts().context_total(ctx);
            let t2 = m2.forward_counts().context_total(ctx);
            for (tok, n) in next {
                assert_eq!(m2.forward_counts().count(ctx, tok), 2 * n);
                assert_eq!(t2, 2 * t1);
            }
        }
    }

    #[test]
    fn training_is_deterministic() {
        let (v, c) = corpus(&["a b c", "b a", "c c a b"]);
        let m1 = train_ngram(&v, &c, params(3, 0.7)).unwrap();
        let m2 = train_ngram(&v, &c, params(3, 0.7)).unwrap();
        assert_eq!(m1, m2);
        let q = [4, 5, 6, 4];
        for i in 0..q.len() {
            assert_eq!(
                m1.masked_position_distribution(&q, i).unwrap(),
                m2.masked_position_distribution(&q, i).unwrap()
            );
        }
        assert_eq!(
            m1.next_token_logprobs(&q, &[4, 5]).unwrap(),
            m2.next_token_logprobs(&q, &[4, 5]).unwrap()
        );
    }

    #[test]
    fn disjoint_corpora_diverge_on_shared_probe() {
        let mut b = VocabularyBuilder::new();
        let left: Vec<_> = ["a b c", "c b a"].iter().map(|t| b.encode(t)).collect();
        let right: Vec<_> = ["x y z", "z y x"].iter().map(|t| b.encode(t)).collect();
        let v = b.finish().unwrap();
        let seqs = |s: Vec<Vec<TokenId>>| -> Vec<TokenSequence> {
            s.into_iter().map(|t| TokenSequence::new(t).unwrap()).collect()
        };
        let m1 = train_ngram(&v, &seqs(left), params(2, 0.7)).unwrap();
        let m2 = train_ngram(&v, &seqs(right), params(2, 0.7)).unwrap();
        let probe = v.encode("a y c");
        let d = symmetric_divergence(
            &m1.masked_position_distribution(&probe, 1).unwrap(),
            &m2.masked_position_distribution(&probe, 1).unwrap(),
        )
        .unwrap();
        assert!(d > 0.1, "{d}");
    }

    #[test]
    fn infill_ignores_token_at_position() {
        let (v, c) = corpus(&["a b c", "b a", "c c a b"]);
        let m = train_ngram(&v, &c, params(3, 0.7)).unwrap();
        let a = m.masked_position_distribution(&[4, 5, 6, 4], 2).unwrap();
        let b = m.masked_position_distribution(&[4, 5, 4, 4], 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unigram_order_has_empty_context() {
        let (v, c) = corpus(&["a a b"]);
        let m = train_ngram(&v, &c, params(1, 0.0)).unwrap();
        assert_eq!(m.forward_counts().count(&[], 4), 2);
        assert_eq!(m.forward_counts().context_total(&[]), 4);
        let d = m.masked_position_distribution(&[5, 5], 0).unwrap();
        assert_eq!(d.argmax(), 4);
    }

    #[test]
    fn training_errors() {
        let (v, c) = corpus(&["a b"]);
        assert!(matches!(train_ngram(&v, &[], params(2, 0.7)), Err(Error::Training(_))));
        assert!(matches!(train_ngram(&v, &c, params(0, 0.7)), Err(Error::Config(_))));
        let bad = NGramParams { k: 0.0, ..params(2, 0.7) };
        assert!(matches!(train_ngram(&v, &c, bad), Err(Error::Config(_))));
        assert!(matches!(train_ngram(&v, &c, params(2, 1.5)), Err(Error::Config(_))));
    }

    #[test]
    fn vectors_satisfy_invariants() {
        let (v, c) = corpus(&["a b c d", "d c b a", "a a"]);
        for order in 1..=3 {
            let m = train_ngram(&v, &c, params(order, 0.7)).unwrap();
            let q = [4, 7, 5, 6, 6];
            for i in 0..q.len() {
                let d = m.masked_position_distribution(&q, i).unwrap();
                assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
                let l = m.next_token_logprobs(&q, &q[..i]).unwrap();
                assert!(l.values().iter().all(|x| x.is_finite()));
                assert!((l.values().iter().map(|x| x.exp()).sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }
}
