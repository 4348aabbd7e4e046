// SPDX-License-Identifier: Apache-2.0

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub type TokenId = u32;

pub const MASK: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
pub const UNK: TokenId = 3;

/// Surface strings of the reserved tokens, in id order.
pub const RESERVED_TOKENS: [&str; 4] = ["<mask>", "<s>", "</s>", "<unk>"];

/// Word-level token table. Ids 0..4 are always MASK, BOS, EOS, UNK.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    entries: Vec<String>,
    index: HashMap<String, TokenId>,
    checksum: String,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl Eq for Vocabulary {}

fn validate_token(token: &str) -> Result<()> {
    if token.is_empty() || token.chars().any(char::is_whitespace) {
        return Err(Error::Format(format!("invalid token string {token:?}")));
    }
    Ok(())
}

impl Vocabulary {
    /// Build from a full entry list (reserved tokens first). Requires at least
    /// one content token.
    pub fn from_entries(entries: Vec<String>) -> Result<Self> {
        if entries.len() < RESERVED_TOKENS.len() + 1 {
            return Err(Error::Format(format!(
                "vocabulary needs the 4 reserved tokens and at least one content token, got {} entries",
                entries.len()
            )));
        }
        Self::build(entries)
    }

    fn build(entries: Vec<String>) -> Result<Self> {
        for (i, reserved) in RESERVED_TOKENS.iter().enumerate() {
            if entries.get(i).map(String::as_str) != Some(*reserved) {
                return Err(Error::Format(format!(
                    "entry {i} must be the reserved token {reserved:?}"
                )));
            }
        }
        let mut index = HashMap::with_capacity(entries.len());
        for (id, token) in entries.iter().enumerate() {
            validate_token(token)?;
            if index.insert(token.clone(), id as TokenId).is_some() {
                return Err(Error::Format(format!("duplicate token {token:?}")));
            }
        }
        let checksum = hex::encode(Sha256::digest(Self::render_file(&entries).as_bytes()));
        Ok(Vocabulary {
            entries,
            index,
            checksum,
        })
    }

    fn render_file(entries: &[String]) -> String {
        let mut out = String::new();
        for e in entries {
            let _ = writeln!(out, "{e}");
        }
        out
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    /// Number of non-reserved tokens.
    pub fn content_len(&self) -> usize {
        self.entries.len() - RESERVED_TOKENS.len()
    }

    pub fn lookup(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn render(&self, id: TokenId) -> Option<&str> {
        self.entries.get(id as usize).map(String::as_str)
    }

    /// SHA-256 hex digest of the vocabulary file contents.
    pub fn checksum(&self) -> &str {
        &self.checksum
    }

    /// Whitespace-split `text` and map each word to its id, UNK when absent.
    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        text.split_whitespace()
            .map(|w| self.lookup(w).unwrap_or(UNK))
            .collect()
    }

    /// Space-joined surface form. Out-of-range ids render as the UNK string.
    pub fn decode(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .map(|&id| self.render(id).unwrap_or(RESERVED_TOKENS[UNK as usize]))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn to_file_string(&self) -> String {
        Self::render_file(&self.entries)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let entries: Vec<String> = text.lines().map(str::to_owned).collect();
        Self::from_entries(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_file_string())?;
        Ok(())
    }
}

/// Grows a vocabulary in first-seen order after the reserved tokens.
#[derive(Debug, Clone)]
pub struct VocabularyBuilder {
    entries: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Default for VocabularyBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl VocabularyBuilder {
    pub fn new() -> Self {
        let entries: Vec<String> = RESERVED_TOKENS.iter().map(|s| s.to_string()).collect();
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as TokenId))
            .collect();
        VocabularyBuilder { entries, index }
    }

    pub fn from_vocabulary(vocab: &Vocabulary) -> Self {
        VocabularyBuilder {
            entries: vocab.entries.clone(),
            index: vocab.index.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn intern(&mut self, token: &str) -> TokenId {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = self.entries.len() as TokenId;
        self.entries.push(token.to_owned());
        self.index.insert(token.to_owned(), id);
        id
    }

    /// Intern every whitespace-separated word of `text`.
    pub fn encode(&mut self, text: &str) -> Vec<TokenId> {
        text.split_whitespace().map(|w| self.intern(w)).collect()
    }

    /// Freeze into a [`Vocabulary`]; fails while only reserved tokens exist.
    pub fn finish(self) -> Result<Vocabulary> {
        Vocabulary::from_entries(self.entries)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abc() -> Vocabulary {
        let mut b = VocabularyBuilder::new();
        b.encode("a b c");
        b.finish().unwrap()
    }

    #[test]
    fn reserved_ids_are_fixed() {
        let v = abc();
        assert_eq!(v.lookup("<mask>"), Some(MASK));
        assert_eq!(v.lookup("<s>"), Some(BOS));
        assert_eq!(v.lookup("</s>"), Some(EOS));
        assert_eq!(v.lookup("<unk>"), Some(UNK));
        assert_eq!(v.lookup("a"), Some(4));
        assert_eq!(v.len(), 7);
    }

    #[test]
    fn lookup_and_render_are_inverse() {
        let v = abc();
        for id in 0..v.len() as TokenId {
            assert_eq!(v.lookup(v.render(id).unwrap()), Some(id));
        }
    }

    #[test]
    fn oov_maps_to_unk() {
        assert_eq!(abc().encode("a zzz c"), vec![4, UNK, 6]);
    }

    #[test]
    fn file_round_trip() {
        let v = abc();
        let parsed = Vocabulary::parse(&v.to_file_string()).unwrap();
        assert_eq!(parsed, v);
        assert_eq!(parsed.checksum(), v.checksum());
    }

    #[test]
    fn rejects_bad_files() {
        assert!(Vocabulary::parse("<mask>\n<s>\n</s>\n<unk>\n").is_err());
        assert!(Vocabulary::parse("<s>\n<mask>\n</s>\n<unk>\na\n").is_err());
        assert!(Vocabulary::parse("<mask>\n<s>\n</s>\n<unk>\na\na\n").is_err());
        assert!(Vocabulary::parse("<mask>\n<s>\n</s>\n<unk>\na b\n").is_err());
    }

    #[test]
    fn checksum_depends_on_order() {
        let mut b = VocabularyBuilder::new();
        b.encode("b a c");
        assert_ne!(b.finish().unwrap().checksum(), abc().checksum());
    }
}
