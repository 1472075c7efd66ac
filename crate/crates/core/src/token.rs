//! Token-level InfoRMIA and token-to-sequence aggregation.
//!
//! Each predicted position is scored with the vocabulary itself as the
//! population: `log(p(x|θ)/p̄(x)) + D_KL(p̄ || p(·|θ))`, where `p̄` averages
//! the reference models' next-token distributions in probability space.

use serde::{Deserialize, Serialize};

use crate::config::{check_k_percent, AttackConfig, LogBase};
use crate::data::{reference_average, SequenceSignal, TokenSignal};
use crate::error::{Error, Result};
use crate::prob_algebra::{log_mean_exp, CompensatedSum, PROB_FLOOR};

/// One score per predicted position of a sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenScoreVector {
    pub scores: Vec<f64>,
    pub base: LogBase,
}

impl TokenScoreVector {
    pub fn new(scores: Vec<f64>, base: LogBase) -> Self {
        TokenScoreVector { scores, base }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Mean,
    MinK,
}

impl std::str::FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Aggregation::Mean),
            "min_k" | "min-k" | "mink" => Ok(Aggregation::MinK),
            other => Err(Error::Config(format!("unknown aggregation '{other}'"))),
        }
    }
}

#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn token_informia_score(ts: &TokenSignal, cfg: &AttackConfig) -> Result<f64> {
    if ts.gt_logprob_refs.is_empty() {
        return Err(Error::Empty("reference log-probabilities"));
    }
    let kl = ts
        .kl_refavg_target
        .ok_or(Error::Empty("kl_refavg_target"))?;
    if !(kl >= 0.0) {
        return Err(Error::Config(format!(
            "stored kl_refavg_target {kl} is negative"
        )));
    }
    let log_prior = log_mean_exp(&ts.gt_logprob_refs)?;
    let gain = ts.gt_logprob_target - log_prior;
    Ok(cfg.log_base.from_nats(gain) + cfg.log_base.from_nats(kl))
}

/// Evaluates `Σ_{z ≠ x} p̄(z)·log((p(x|θ)·p̄(z)) / (p(z|θ)·p̄(x)))` from full
/// distributions, with the ground-truth token removed from the population.
/// Agrees with [`token_informia_score`] because the removed term is `log 1`.
pub fn token_informia_excluding_gt(ts: &TokenSignal, cfg: &AttackConfig) -> Result<f64> {
    let (Some(target), Some(refs)) = (&ts.full_dist_target, &ts.full_dist_refs) else {
        return Err(Error::Empty("full distributions"));
    };
    let gt = ts.gt_token.ok_or(Error::Empty("gt_token"))?;
    if refs.is_empty() {
        return Err(Error::Empty("reference distributions"));
    }
    let prior = reference_average(refs);
    if gt >= target.len() || prior.len() != target.len() {
        return Err(Error::DimensionMismatch {
            left: target.len(),
            right: prior.len(),
        });
    }
    let px_theta = target[gt].max(PROB_FLOOR);
    let px = prior[gt].max(PROB_FLOOR);
    let mut acc = CompensatedSum::new();
    for (z, (&pz, &pz_theta)) in prior.iter().zip(target).enumerate() {
        if z == gt || pz <= 0.0 {
            continue;
        }
        acc.add(pz * ((px_theta * pz) / (pz_theta.max(PROB_FLOOR) * px)).ln());
    }
    Ok(cfg.log_base.from_nats(acc.value()))
}

pub fn aggregate_mean(v: &TokenScoreVector) -> Result<f64> {
    crate::prob_algebra::mean(&v.scores)
}

/// Number of elements kept by a bottom-k% selection over `n` items:
/// `floor(k%·n)`, never fewer than one.
pub fn bottom_count(n: usize, k_percent: f64) -> usize {
    let raw = (k_percent / 100.0 * n as f64 + 1e-9).floor() as usize;
    raw.clamp(1, n.max(1))
}

/// Mean of the bottom `k%` of `values`. Ties are broken by position, and the
/// selected elements are summed in position order, so `k = 100` reproduces
/// the plain mean bit for bit.
pub fn bottom_k_mean(values: &[f64], k_percent: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("score vector"));
    }
    check_k_percent(k_percent)?;
    let m = bottom_count(values.len(), k_percent);
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]).then(i.cmp(&j)));
    let mut chosen = order[..m].to_vec();
    chosen.sort_unstable();
    let mut acc = CompensatedSum::new();
    for i in chosen {
        acc.add(values[i]);
    }
    Ok(acc.value() / m as f64)
}

pub fn aggregate_min_k(v: &TokenScoreVector, k_percent: f64) -> Result<f64> {
    bottom_k_mean(&v.scores, k_percent)
}

pub fn aggregate(v: &TokenScoreVector, agg: Aggregation, cfg: &AttackConfig) -> Result<f64> {
    match agg {
        Aggregation::Mean => aggregate_mean(v),
        Aggregation::MinK => aggregate_min_k(v, cfg.k_percent),
    }
}

/// Token InfoRMIA for every predicted position of a record.
pub fn token_scores(rec: &SequenceSignal, cfg: &AttackConfig) -> Result<TokenScoreVector> {
    let scores = rec
        .tokens()?
        .iter()
        .enumerate()
        .map(|(i, ts)| {
            token_informia_score(ts, cfg).map_err(|e| Error::at_position(&rec.id, i + 1, e))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TokenScoreVector::new(scores, cfg.log_base))
}

/// Scores each position, then reduces to one sequence score.
pub fn score_sequence_via_tokens(
    rec: &SequenceSignal,
    agg: Aggregation,
    cfg: &AttackConfig,
) -> Result<(TokenScoreVector, f64)> {
    let v = token_scores(rec, cfg)?;
    let s = aggregate(&v, agg, cfg)?;
    Ok((v, s))
}
