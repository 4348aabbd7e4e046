// SPDX-License-Identifier: Apache-2.0

//! Dataset ingestion and text cleaning.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::textcore::{TokenSequence, Vocabulary, VocabularyBuilder};

/// Records longer than this many space-delimited words are dropped.
pub const DEFAULT_MAX_WORDS: usize = 44;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceTag {
    Magr,
    Sbf,
    Dynahate,
    Other,
}

impl FromStr for SourceTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "magr" => Ok(SourceTag::Magr),
            "sbf" => Ok(SourceTag::Sbf),
            "dynahate" => Ok(SourceTag::Dynahate),
            "other" => Ok(SourceTag::Other),
            _ => Err(Error::Config(format!("unknown source tag {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRecord {
    pub text: String,
    pub source: SourceTag,
}

/// Outcome of [`preprocess`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Cleaned {
    Kept(String),
    Filtered,
}

impl Cleaned {
    pub fn kept(&self) -> Option<&str> {
        match self {
            Cleaned::Kept(s) => Some(s),
            Cleaned::Filtered => None,
        }
    }
}

fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Collapse whitespace runs to single spaces, decode character references,
/// apply NFC, then drop texts with more than `max_words` words.
///
/// Decoding repeats until nothing changes so that the result is a fixed point
/// (`&amp;gt;` ends up as `>` in one call).
pub fn preprocess(text: &str, max_words: usize) -> Cleaned {
    let mut current = collapse_whitespace(&text.nfc().collect::<String>());
    loop {
        let decoded = html_escape::decode_html_entities(&current);
        let next = collapse_whitespace(&decoded.nfc().collect::<String>());
        if next == current {
            break;
        }
        current = next;
    }
    if current.split(' ').filter(|w| !w.is_empty()).count() > max_words {
        Cleaned::Filtered
    } else {
        Cleaned::Kept(current)
    }
}

/// A loaded dataset: the surviving sequences plus a per-line manifest.
#[derive(Debug, Clone)]
pub struct LoadedCorpus {
    pub source: SourceTag,
    pub sequences: Vec<TokenSequence>,
    /// One entry per input line, in order.
    pub manifest: Vec<Cleaned>,
}

impl LoadedCorpus {
    /// Tab-separated `kept|FILTERED <TAB> cleaned text`, one line per input.
    pub fn manifest_tsv(&self) -> String {
        let mut out = String::new();
        for c in &self.manifest {
            let _ = match c {
                Cleaned::Kept(s) => writeln!(out, "kept\t{s}"),
                Cleaned::Filtered => writeln!(out, "FILTERED\t"),
            };
        }
        out
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    Ok(fs::read_to_string(path)?.lines().map(str::to_owned).collect())
}

/// Load `path`, growing `vocab` with every new word in first-seen order.
/// Filtered and blank records are left out of `sequences`.
pub fn load_dataset_into(
    path: impl AsRef<Path>,
    source: SourceTag,
    vocab: &mut VocabularyBuilder,
) -> Result<LoadedCorpus> {
    let mut sequences = Vec::new();
    let mut manifest = Vec::new();
    for line in read_lines(path.as_ref())? {
        let cleaned = preprocess(&line, DEFAULT_MAX_WORDS);
        if let Some(text) = cleaned.kept() {
            let ids = vocab.encode(text);
            if !ids.is_empty() {
                sequences.push(TokenSequence::new(ids)?);
            }
        }
        manifest.push(cleaned);
    }
    Ok(LoadedCorpus {
        source,
        sequences,
        manifest,
    })
}

/// Load `path` with a fresh vocabulary. The returned builder holds only the
/// reserved tokens when the file is empty.
pub fn load_dataset(path: impl AsRef<Path>, source: SourceTag) -> Result<(LoadedCorpus, VocabularyBuilder)> {
    let mut vocab = VocabularyBuilder::new();
    let corpus = load_dataset_into(path, source, &mut vocab)?;
    Ok((corpus, vocab))
}

/// Load `path` against a fixed vocabulary; unknown words become UNK.
pub fn load_with_vocabulary(
    path: impl AsRef<Path>,
    source: SourceTag,
    vocab: &Vocabulary,
) -> Result<LoadedCorpus> {
    let mut sequences = Vec::new();
    let mut manifest = Vec::new();
    for line in read_lines(path.as_ref())? {
        let cleaned = preprocess(&line, DEFAULT_MAX_WORDS);
        if let Some(text) = cleaned.kept() {
            let seq = TokenSequence::encode(vocab, text)?;
            if !seq.is_empty() {
                sequences.push(seq);
            }
        }
        manifest.push(cleaned);
    }
    Ok(LoadedCorpus {
        source,
        sequences,
        manifest,
    })
}
