// SPDX-License-Identifier: Apache-2.0

//! The end-to-end pipeline: mask, then replace.

mod config;
mod sweep;

pub use config::{preset, Preset, RewriteConfig, DEFAULT_MAX_LEN};
pub use sweep::{sweep, sweep_with, SelectionWeights, SweepEntry, SweepGrid};

use serde::{Deserialize, Serialize};

use crate::decoder::{poe_rewrite, DecodeTrace, ModelTriple};
use crate::error::Result;
use crate::masker::{contextual_mask_with, DivergenceProfile};
use crate::par::Execution;
use crate::textcore::{MaskedSequence, TokenSequence};

/// The original, its masked variant, and the generated rewrite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewriteResult {
    pub original: TokenSequence,
    pub profile: DivergenceProfile,
    pub masked: MaskedSequence,
    pub rewrite: TokenSequence,
    pub trace: DecodeTrace,
}

/// Mask `original` with the expert pair, then decode a rewrite with all three
/// models. The replacing step runs even when nothing was masked.
pub fn rewrite(original: &TokenSequence, models: ModelTriple<'_>, config: &RewriteConfig) -> Result<RewriteResult> {
    config.validate()?;
    models.check_vocabulary()?;
    let (masked, profile) = contextual_mask_with(
        original,
        models.expert,
        models.antiexpert,
        config.tau,
        config.mask_collapse,
        Execution::Sequential,
    )?;
    let (rewrite, trace) = poe_rewrite(original, &masked, models, &config.weights(), config.max_len)?;
    Ok(RewriteResult {
        original: original.clone(),
        profile,
        masked,
        rewrite,
        trace,
    })
}

/// Rewrite every sequence; results come back in input order.
pub fn rewrite_batch(
    originals: &[TokenSequence],
    models: ModelTriple<'_>,
    config: &RewriteConfig,
    exec: Execution,
) -> Vec<Result<RewriteResult>> {
    exec.map(originals, |w| rewrite(w, models, config))
}
