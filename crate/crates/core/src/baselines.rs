//! Reference-free and reference-based baseline attacks.
//!
//! All scores are oriented "higher = more member-like". MIMIR reports the
//! opposite orientation; the signs below are flipped accordingly.

use std::collections::BTreeMap;

use crate::data::SequenceSignal;
use crate::error::{Error, Result};
use crate::prob_algebra::{compensated_sum, mean};
use crate::token::bottom_k_mean;

/// Floor applied to per-position sigma in Min-K%++.
pub const SIGMA_FLOOR: f64 = 1e-8;

/// Token id to corpus frequency, for frequency-calibrated baselines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrequencyTable(BTreeMap<u32, u64>);

impl FrequencyTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, token: u32, count: u64) {
        *self.0.entry(token).or_default() += count;
    }

    pub fn get(&self, token: u32) -> u64 {
        self.0.get(&token).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.0.values().sum()
    }
}

fn target_logprobs(rec: &SequenceSignal) -> Result<Vec<f64>> {
    Ok(rec.tokens()?.iter().map(|t| t.gt_logprob_target).collect())
}

/// Mean ground-truth log-probability (negated average loss).
pub fn loss_attack(rec: &SequenceSignal) -> Result<f64> {
    mean(&target_logprobs(rec)?)
}

/// Total log-likelihood divided by the compressed text length.
pub fn zlib_attack(rec: &SequenceSignal, text_bytes: u64) -> Result<f64> {
    let lps = target_logprobs(rec)?;
    if text_bytes == 0 {
        return Err(Error::InvalidRecord {
            id: rec.id.clone(),
            message: "compressed length is zero".into(),
        });
    }
    Ok(compensated_sum(lps) / text_bytes as f64)
}

/// [`zlib_attack`] using the record's stored `zlib_bytes`.
pub fn zlib_attack_stored(rec: &SequenceSignal) -> Result<f64> {
    let bytes = rec.zlib_bytes.ok_or_else(|| Error::InvalidRecord {
        id: rec.id.clone(),
        message: "zlib_bytes is missing".into(),
    })?;
    zlib_attack(rec, bytes)
}

/// Mean of the lowest `k%` ground-truth log-probabilities.
pub fn min_k_attack(rec: &SequenceSignal, k_percent: f64) -> Result<f64> {
    bottom_k_mean(&target_logprobs(rec)?, k_percent)
}

/// Min-K% over `(log p − mu) / max(sigma, 1e-8)` per position.
pub fn min_k_pp_attack(rec: &SequenceSignal, k_percent: f64) -> Result<f64> {
    let normalized = rec
        .tokens()?
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let missing = |field| Error::MissingTokenField {
                id: rec.id.clone(),
                position: i + 1,
                field,
            };
            let mu = t.mu_target.ok_or_else(|| missing("mu_target"))?;
            let sigma = t.sigma_target.ok_or_else(|| missing("sigma_target"))?;
            Ok((t.gt_logprob_target - mu) / sigma.max(SIGMA_FLOOR))
        })
        .collect::<Result<Vec<_>>>()?;
    bottom_k_mean(&normalized, k_percent)
}

/// Mean log-likelihood gap between the target and reference `ref_index`.
pub fn ref_attack(rec: &SequenceSignal, ref_index: usize) -> Result<f64> {
    let gaps = rec
        .tokens()?
        .iter()
        .map(|t| {
            t.gt_logprob_refs
                .get(ref_index)
                .map(|r| t.gt_logprob_target - r)
                .ok_or(Error::RefIndexOutOfBounds {
                    id: rec.id.clone(),
                    index: ref_index,
                    available: t.gt_logprob_refs.len(),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    mean(&gaps)
}
