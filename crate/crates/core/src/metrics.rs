// SPDX-License-Identifier: Apache-2.0

//! Automatic rewrite metrics behind a pluggable scorer contract, plus the
//! built-in proxies: lexicon toxicity, n-gram perplexity, unigram-overlap F1.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::NGramInfillLm;
use crate::par::Execution;
use crate::rewriter::RewriteConfig;
use crate::textcore::{TokenId, TokenSequence, Vocabulary, EOS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorerKind {
    Toxicity,
    Fluency,
    Similarity,
}

/// One automatic metric. Toxicity and similarity lie in `[0, 1]`; fluency is
/// a perplexity, positive and finite.
pub trait Scorer: Send + Sync {
    fn kind(&self) -> ScorerKind;

    /// Score the rewrite of example `index`.
    fn score(&self, index: usize, original: &TokenSequence, rewrite: &TokenSequence) -> Result<f64>;
}

fn check_range(kind: ScorerKind, value: f64) -> Result<f64> {
    let ok = match kind {
        ScorerKind::Toxicity | ScorerKind::Similarity => (0.0..=1.0).contains(&value),
        ScorerKind::Fluency => value.is_finite() && value > 0.0,
    };
    if ok {
        Ok(value)
    } else {
        Err(Error::NumericInput(format!("{kind:?} score {value} out of range")))
    }
}

/// Fraction of tokens that belong to `lexicon`. Empty sequences score 0.
pub fn lexicon_toxicity(seq: &TokenSequence, lexicon: &HashSet<TokenId>) -> f64 {
    if seq.is_empty() {
        return 0.0;
    }
    let hits = seq.tokens().iter().filter(|t| lexicon.contains(t)).count();
    hits as f64 / seq.len() as f64
}

/// `exp` of the mean negative log-probability of each token under the
/// forward n-gram. The copy weight plays no part.
pub fn ngram_perplexity(seq: &TokenSequence, lm: &NGramInfillLm) -> Result<f64> {
    if seq.is_empty() {
        return Err(Error::Input("perplexity of an empty sequence".into()));
    }
    let tokens = seq.tokens();
    let nll: f64 = (0..tokens.len())
        .map(|i| lm.forward_neg_log_prob(&tokens[..i], tokens[i]))
        .sum();
    Ok((nll / tokens.len() as f64).exp())
}

/// Unigram multiset F1. Two empty sequences are identical (1.0).
pub fn overlap_similarity(a: &TokenSequence, b: &TokenSequence) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<TokenId, usize> = HashMap::new();
    for &t in a.tokens() {
        *counts.entry(t).or_default() += 1;
    }
    let mut overlap = 0usize;
    for &t in b.tokens() {
        if let Some(c) = counts.get_mut(&t) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    2.0 * overlap as f64 / (a.len() + b.len()) as f64
}

pub struct LexiconToxicity {
    lexicon: HashSet<TokenId>,
}

impl LexiconToxicity {
    pub fn new(lexicon: HashSet<TokenId>) -> Self {
        LexiconToxicity { lexicon }
    }

    /// One word per line; words outside the vocabulary are ignored.
    pub fn from_words<'a>(vocab: &Vocabulary, words: impl IntoIterator<Item = &'a str>) -> Self {
        let lexicon = words
            .into_iter()
            .filter_map(|w| vocab.lookup(w.trim()))
            .filter(|&id| id as usize >= crate::textcore::RESERVED_TOKENS.len())
            .collect();
        LexiconToxicity { lexicon }
    }

    pub fn load(vocab: &Vocabulary, path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(Self::from_words(vocab, text.lines().filter(|l| !l.trim().is_empty())))
    }

    pub fn lexicon(&self) -> &HashSet<TokenId> {
        &self.lexicon
    }
}

impl Scorer for LexiconToxicity {
    fn kind(&self) -> ScorerKind {
        ScorerKind::Toxicity
    }

    fn score(&self, _: usize, _: &TokenSequence, rewrite: &TokenSequence) -> Result<f64> {
        Ok(lexicon_toxicity(rewrite, &self.lexicon))
    }
}

/// Perplexity under a forward n-gram. An empty rewrite is scored by the
/// probability of ending immediately.
pub struct NGramFluency<'a> {
    lm: &'a NGramInfillLm,
}

impl<'a> NGramFluency<'a> {
    pub fn new(lm: &'a NGramInfillLm) -> Self {
        NGramFluency { lm }
    }
}

impl Scorer for NGramFluency<'_> {
    fn kind(&self) -> ScorerKind {
        ScorerKind::Fluency
    }

    fn score(&self, _: usize, _: &TokenSequence, rewrite: &TokenSequence) -> Result<f64> {
        if rewrite.is_empty() {
            return Ok(self.lm.forward_neg_log_prob(&[], EOS).exp());
        }
        ngram_perplexity(rewrite, self.lm)
    }
}

pub struct OverlapSimilarity;

impl Scorer for OverlapSimilarity {
    fn kind(&self) -> ScorerKind {
        ScorerKind::Similarity
    }

    fn score(&self, _: usize, original: &TokenSequence, rewrite: &TokenSequence) -> Result<f64> {
        Ok(overlap_similarity(original, rewrite))
    }
}

/// Scores computed elsewhere (an external classifier, a large LM), read from
/// a tab-separated `(id, score)` file where `id` is the 0-based example index.
pub struct PrecomputedScores {
    kind: ScorerKind,
    scores: HashMap<usize, f64>,
}

impl PrecomputedScores {
    pub fn parse(kind: ScorerKind, text: &str) -> Result<Self> {
        let mut scores = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() || (lineno == 0 && line.starts_with("id\t")) {
                continue;
            }
            let mut fields = line.split('\t');
            let (Some(id), Some(score), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(Error::Format(format!("line {}: expected `id<TAB>score`", lineno + 1)));
            };
            let id: usize = id
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("line {}: bad id {id:?}", lineno + 1)))?;
            let score: f64 = score
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("line {}: bad score {score:?}", lineno + 1)))?;
            scores.insert(id, check_range(kind, score)?);
        }
        Ok(PrecomputedScores { kind, scores })
    }

    pub fn load(kind: ScorerKind, path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(kind, &fs::read_to_string(path)?)
    }
}

impl Scorer for PrecomputedScores {
    fn kind(&self) -> ScorerKind {
        self.kind
    }

    fn score(&self, index: usize, _: &TokenSequence, _: &TokenSequence) -> Result<f64> {
        self.scores
            .get(&index)
            .copied()
            .ok_or_else(|| Error::Input(format!("no precomputed {:?} score for id {index}", self.kind)))
    }
}

/// The three scorers a report needs.
#[derive(Clone, Copy)]
pub struct ScorerSet<'a> {
    pub toxicity: &'a dyn Scorer,
    pub fluency: &'a dyn Scorer,
    pub similarity: &'a dyn Scorer,
}

impl<'a> ScorerSet<'a> {
    pub fn new(toxicity: &'a dyn Scorer, fluency: &'a dyn Scorer, similarity: &'a dyn Scorer) -> Result<Self> {
        for (s, want) in [
            (toxicity, ScorerKind::Toxicity),
            (fluency, ScorerKind::Fluency),
            (similarity, ScorerKind::Similarity),
        ] {
            if s.kind() != want {
                return Err(Error::Config(format!("expected a {want:?} scorer, got {:?}", s.kind())));
            }
        }
        Ok(ScorerSet {
            toxicity,
            fluency,
            similarity,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExampleScores {
    pub toxicity: f64,
    pub similarity: f64,
    pub fluency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub count: usize,
    pub mean_toxicity: f64,
    pub mean_similarity: f64,
    pub mean_fluency: f64,
    pub examples: Vec<ExampleScores>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<RewriteConfig>,
}

impl MetricReport {
    pub fn from_examples(examples: Vec<ExampleScores>, config: Option<RewriteConfig>) -> Self {
        let n = examples.len();
        let mean = |f: fn(&ExampleScores) -> f64| {
            if n == 0 {
                0.0
            } else {
                examples.iter().map(f).sum::<f64>() / n as f64
            }
        };
        MetricReport {
            count: n,
            mean_toxicity: mean(|e| e.toxicity),
            mean_similarity: mean(|e| e.similarity),
            mean_fluency: mean(|e| e.fluency),
            examples,
            config,
        }
    }

    /// Tab-separated table, columns Toxicity, Similarity, Fluency, with a
    /// final `mean` row.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("id\ttoxicity\tsimilarity\tfluency\n");
        for (i, e) in self.examples.iter().enumerate() {
            let _ = writeln!(out, "{i}\t{:.6}\t{:.6}\t{:.6}", e.toxicity, e.similarity, e.fluency);
        }
        let _ = writeln!(
            out,
            "mean\t{:.6}\t{:.6}\t{:.6}",
            self.mean_toxicity, self.mean_similarity, self.mean_fluency
        );
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn evaluate(
    originals: &[TokenSequence],
    rewrites: &[TokenSequence],
    scorers: ScorerSet<'_>,
) -> Result<MetricReport> {
    evaluate_with(originals, rewrites, scorers, Execution::default())
}

pub fn evaluate_with(
    originals: &[TokenSequence],
    rewrites: &[TokenSequence],
    scorers: ScorerSet<'_>,
    exec: Execution,
) -> Result<MetricReport> {
    if originals.len() != rewrites.len() {
        return Err(Error::shape(originals.len(), rewrites.len()));
    }
    let examples = exec.try_map_range(originals.len(), |i| {
        let (o, r) = (&originals[i], &rewrites[i]);
        Ok::<_, Error>(ExampleScores {
            toxicity: check_range(ScorerKind::Toxicity, scorers.toxicity.score(i, o, r)?)?,
            similarity: check_range(ScorerKind::Similarity, scorers.similarity.score(i, o, r)?)?,
            fluency: check_range(ScorerKind::Fluency, scorers.fluency.score(i, o, r)?)?,
        })
    })?;
    Ok(MetricReport::from_examples(examples, None))
}
