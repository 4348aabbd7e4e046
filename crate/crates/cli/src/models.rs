// SPDX-License-Identifier: Apache-2.0

use std::path::Path;

use marco::lm::{load_model, DenoisingLm, LocalModel, NGramInfillLm};
use marco::net::{parse_endpoint, RemoteLm};
use marco::textcore::{Distribution, LogProbVector, TokenId, Vocabulary};
use marco::{Error, Result};

/// A model named on the command line: a model file or a `tcp://` endpoint.
pub enum Model {
    Local(LocalModel),
    Remote(RemoteLm),
}

impl DenoisingLm for Model {
    fn vocabulary(&self) -> &Vocabulary {
        match self {
            Model::Local(m) => m.vocabulary(),
            Model::Remote(m) => m.vocabulary(),
        }
    }

    fn masked_position_distribution(&self, seq: &[TokenId], position: usize) -> Result<Distribution> {
        match self {
            Model::Local(m) => m.masked_position_distribution(seq, position),
            Model::Remote(m) => m.masked_position_distribution(seq, position),
        }
    }

    fn next_token_logprobs(&self, condition: &[TokenId], prefix: &[TokenId]) -> Result<LogProbVector> {
        match self {
            Model::Local(m) => m.next_token_logprobs(condition, prefix),
            Model::Remote(m) => m.next_token_logprobs(condition, prefix),
        }
    }
}

/// Load every designator. Remote models take the vocabulary from `--vocab`
/// or, failing that, from the first local model.
pub fn load_models(designators: &[&str], vocab_path: Option<&Path>) -> Result<(Vocabulary, Vec<Model>)> {
    let mut locals: Vec<Option<LocalModel>> = Vec::new();
    for d in designators {
        locals.push(match parse_endpoint(d) {
            Some(_) => None,
            None => Some(load_model(d)?),
        });
    }
    let vocab = match vocab_path {
        Some(p) => Vocabulary::load(p)?,
        None => match locals.iter().flatten().next() {
            Some(m) => m.vocabulary().clone(),
            None => {
                return Err(Error::Config(
                    "remote models need --vocab when no local model file is given".into(),
                ))
            }
        },
    };
    let mut models = Vec::new();
    for (d, local) in designators.iter().zip(locals) {
        models.push(match local {
            Some(m) => Model::Local(m),
            None => Model::Remote(RemoteLm::new(d, vocab.clone())?),
        });
    }
    for (d, m) in designators.iter().zip(&models) {
        if m.vocabulary().checksum() != vocab.checksum() {
            return Err(Error::Config(format!("{d}: model vocabulary differs from the run vocabulary")));
        }
    }
    Ok((vocab, models))
}

pub fn load_ngram(path: &Path) -> Result<NGramInfillLm> {
    match load_model(path)? {
        LocalModel::NGram(m) => Ok(m),
        LocalModel::Table(_) => Err(Error::Config(format!(
            "{}: fluency scoring needs an n-gram model",
            path.display()
        ))),
    }
}
