// SPDX-License-Identifier: Apache-2.0

//! Versioned JSON persistence for the built-in models.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ngram::{CountTable, NGramInfillLm, NGramParams};
use super::table::{Fallback, TableLm};
use super::DenoisingLm;
use crate::error::{Error, Result};
use crate::textcore::{Distribution, LogProbVector, TokenId, Vocabulary};

const NGRAM_FORMAT: &str = "marco-ngram";
const TABLE_FORMAT: &str = "marco-table";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VocabRecord {
    checksum: String,
    tokens: Vec<String>,
}

impl VocabRecord {
    fn from_vocab(v: &Vocabulary) -> Self {
        VocabRecord {
            checksum: v.checksum().to_owned(),
            tokens: v.entries().to_vec(),
        }
    }

    fn into_vocab(self) -> Result<Vocabulary> {
        let v = Vocabulary::from_entries(self.tokens)?;
        if v.checksum() != self.checksum {
            return Err(Error::Format("vocabulary checksum does not match its tokens".into()));
        }
        Ok(v)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CountRecord {
    context: Vec<TokenId>,
    counts: Vec<(TokenId, u64)>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NGramFile {
    format: String,
    version: u32,
    order: usize,
    k: f64,
    lambda: f64,
    vocabulary: VocabRecord,
    forward: Vec<CountRecord>,
    backward: Vec<CountRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InfillRecord {
    sequence: Vec<TokenId>,
    position: usize,
    probs: Distribution,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DecodeRecord {
    condition: Vec<TokenId>,
    prefix: Vec<TokenId>,
    logprobs: LogProbVector,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableFile {
    format: String,
    version: u32,
    vocabulary: VocabRecord,
    fallback: Fallback,
    infill: Vec<InfillRecord>,
    decode: Vec<DecodeRecord>,
}

fn table_records(table: &CountTable) -> Vec<CountRecord> {
    table
        .iter()
        .map(|(ctx, counts)| CountRecord {
            context: ctx.to_vec(),
            counts,
        })
        .collect()
}

fn table_from_records(records: Vec<CountRecord>) -> CountTable {
    let mut table = CountTable::default();
    for r in records {
        for (t, n) in r.counts {
            table.add(&r.context, t, n);
        }
    }
    table
}

fn check_header(format: &str, version: u32, expected: &str) -> Result<()> {
    if format != expected {
        return Err(Error::Format(format!("expected format {expected:?}, got {format:?}")));
    }
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported {expected} version {version}")));
    }
    Ok(())
}

fn parse_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))
}

impl NGramInfillLm {
    pub fn to_json(&self) -> String {
        let p = self.params();
        let file = NGramFile {
            format: NGRAM_FORMAT.into(),
            version: FORMAT_VERSION,
            order: p.order,
            k: p.k,
            lambda: p.copy_weight,
            vocabulary: VocabRecord::from_vocab(self.vocabulary()),
            forward: table_records(self.forward_counts()),
            backward: table_records(self.backward_counts()),
        };
        serde_json::to_string_pretty(&file).expect("n-gram model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: NGramFile = parse_json(text)?;
        check_header(&f.format, f.version, NGRAM_FORMAT)?;
        let params = NGramParams {
            order: f.order,
            k: f.k,
            copy_weight: f.lambda,
        };
        NGramInfillLm::from_counts(
            f.vocabulary.into_vocab()?,
            params,
            table_from_records(f.forward),
            table_from_records(f.backward),
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

impl TableLm {
    pub fn to_json(&self) -> String {
        let file = TableFile {
            format: TABLE_FORMAT.into(),
            version: FORMAT_VERSION,
            vocabulary: VocabRecord::from_vocab(self.vocabulary()),
            fallback: self.fallback(),
            infill: self
                .infill_entries()
                .into_iter()
                .map(|((seq, pos), d)| InfillRecord {
                    sequence: seq.clone(),
                    position: *pos,
                    probs: d.clone(),
                })
                .collect(),
            decode: self
                .decode_entries()
                .into_iter()
                .map(|((cond, prefix), l)| DecodeRecord {
                    condition: cond.clone(),
                    prefix: prefix.clone(),
                    logprobs: l.clone(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("table model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: TableFile = parse_json(text)?;
        check_header(&f.format, f.version, TABLE_FORMAT)?;
        let mut lm = TableLm::new(f.vocabulary.into_vocab()?).with_fallback(f.fallback);
        for r in f.infill {
            lm.insert_infill(&r.sequence, r.position, r.probs)?;
        }
        for r in f.decode {
            lm.insert_decode(&r.condition, &r.prefix, r.logprobs)?;
        }
        Ok(lm)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json())?;
        Ok(())
    }
}

/// Either built-in model, as read from a model file.
#[derive(Debug, Clone)]
pub enum LocalModel {
    NGram(NGramInfillLm),
    Table(TableLm),
}

#[derive(Deserialize)]
struct FormatProbe {
    format: String,
}

/// Load a model file, dispatching on its `format` field.
pub fn load_model(path: impl AsRef<Path>) -> Result<LocalModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let probe: FormatProbe = parse_json(&text)?;
    match probe.format.as_str() {
        NGRAM_FORMAT => Ok(LocalModel::NGram(NGramInfillLm::from_json(&text)?)),
        TABLE_FORMAT => Ok(LocalModel::Table(TableLm::from_json(&text)?)),
        other => Err(Error::Format(format!(
            "{}: unknown model format {other:?}",
            path.display()
        ))),
    }
}

impl DenoisingLm for LocalModel {
    fn vocabulary(&self) -> &Vocabulary {
        match self {
            LocalModel::NGram(m) => m.vocabulary(),
            LocalModel::Table(m) => m.vocabulary(),
        }
    }

    fn masked_position_distribution(&self, seq: &[TokenId], position: usize) -> Result<Distribution> {
        match self {
            LocalModel::NGram(m) => m.masked_position_distribution(seq, position),
            LocalModel::Table(m) => m.masked_position_distribution(seq, position),
        }
    }

    fn next_token_logprobs(&self, condition: &[TokenId], prefix: &[TokenId]) -> Result<LogProbVector> {
        match self {
            LocalModel::NGram(m) => m.next_token_logprobs(condition, prefix),
            LocalModel::Table(m) => m.next_token_logprobs(condition, prefix),
        }
    }
}
