//! Token-level privacy analyses: PrivBits, entity-group summaries,
//! private/non-private splits, and sequence rankings.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::SequenceSignal;
use crate::error::{Error, Result};
use crate::prob_algebra::{compensated_sum, log_mean_exp, mean, CompensatedSum};
use crate::scores::ScoreSet;

/// Fraction of tokens called "high" (the top 1% by score).
pub const HIGH_FRACTION: f64 = 0.01;

/// Group name for untagged tokens.
pub const UNTAGGED: &str = "None";

/// Nearest-rank percentile of an ascending slice, `q` in `[0, 1]`.
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let rank = (q * sorted.len() as f64 - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

fn sorted_copy(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Score of the `⌈1%·n⌉`-th highest token. Every token scoring at or above
/// it is "high", so ties at the threshold are included.
pub fn high_threshold(scores: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Empty("token scores"));
    }
    let sorted = sorted_copy(scores);
    let top = (HIGH_FRACTION * sorted.len() as f64 - 1e-9).ceil().max(1.0) as usize;
    Ok(sorted[sorted.len() - top])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivBits {
    /// `Σ −log2 p(x)` over private positions.
    pub private_bits: f64,
    /// The same sum over every scored position.
    pub total_bits: f64,
    pub private_positions: usize,
    pub positions: usize,
}

/// Information content of the private positions of a record, with `p(x)`
/// estimated by the reference-ensemble average probability.
pub fn priv_bits(rec: &SequenceSignal) -> Result<PrivBits> {
    let tokens = rec.tokens()?;
    let mask = rec
        .scored_priv_mask()
        .ok_or_else(|| Error::MissingPrivMask(rec.id.clone()))?;
    let mut private = CompensatedSum::new();
    let mut total = CompensatedSum::new();
    let mut private_positions = 0;
    for (i, (tok, &is_private)) in tokens.iter().zip(mask).enumerate() {
        let ln_p = log_mean_exp(&tok.gt_logprob_refs)
            .map_err(|e| Error::at_position(&rec.id, i + 1, e))?;
        let bits = -ln_p / std::f64::consts::LN_2;
        total.add(bits);
        if is_private {
            private.add(bits);
            private_positions += 1;
        }
    }
    Ok(PrivBits {
        private_bits: private.value(),
        total_bits: total.value(),
        private_positions,
        positions: tokens.len(),
    })
}

/// One scored token with its group labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenEntry<'a> {
    pub id: &'a str,
    pub position: usize,
    pub score: f64,
    pub tag: &'a str,
    pub private: Option<bool>,
}

/// Flattens a dataset and its token scores into per-token entries.
pub fn token_entries<'a>(
    records: &'a [SequenceSignal],
    scores: &ScoreSet,
) -> Result<Vec<TokenEntry<'a>>> {
    let mut out = Vec::new();
    for rec in records {
        let Some(ts) = scores.tokens_of(&rec.id) else {
            continue;
        };
        let tags = rec.scored_tags();
        let mask = rec.scored_priv_mask();
        if let Some(n) = rec.tokens.as_ref().map(Vec::len) {
            if n != ts.len() {
                return Err(Error::LengthMismatch {
                    id: rec.id.clone(),
                    field: "token_scores",
                    expected: n,
                    found: ts.len(),
                });
            }
        }
        for (i, &score) in ts.iter().enumerate() {
            let tag = tags
                .and_then(|t| t.get(i))
                .map(String::as_str)
                .unwrap_or("");
            out.push(TokenEntry {
                id: &rec.id,
                position: i + 1,
                score,
                tag: if tag.is_empty() { UNTAGGED } else { tag },
                private: mask.and_then(|m| m.get(i).copied()),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: String,
    pub count: usize,
    pub mean_score: f64,
    pub median_score: f64,
    pub p95: f64,
    /// Tokens in this group that fall in the global top 1%.
    pub n_high: usize,
    pub high_rate: f64,
}

/// Per-tag score summaries, sorted by mean score descending.
pub fn group_summaries(entries: &[TokenEntry<'_>]) -> Result<Vec<GroupSummary>> {
    let all: Vec<f64> = entries.iter().map(|e| e.score).collect();
    let threshold = high_threshold(&all)?;
    let mut groups: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for e in entries {
        groups.entry(e.tag).or_default().push(e.score);
    }
    let mut out: Vec<GroupSummary> = groups
        .into_iter()
        .map(|(group, scores)| {
            let sorted = sorted_copy(&scores);
            let n_high = scores.iter().filter(|&&s| s >= threshold).count();
            GroupSummary {
                group: group.to_owned(),
                count: scores.len(),
                mean_score: compensated_sum(scores.iter().copied()) / scores.len() as f64,
                median_score: nearest_rank(&sorted, 0.5),
                p95: nearest_rank(&sorted, 0.95),
                n_high,
                high_rate: n_high as f64 / scores.len() as f64,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        b.mean_score
            .total_cmp(&a.mean_score)
            .then_with(|| a.group.cmp(&b.group))
    });
    Ok(out)
}

/// Distribution summary of one token population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRow {
    pub group: String,
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation (`n − 1`); zero for a single token.
    pub std: f64,
    pub min: f64,
    pub p10: f64,
    pub p50: f64,
    pub p90: f64,
    pub max: f64,
}

impl SplitRow {
    pub fn from_scores(group: &str, scores: &[f64]) -> Option<Self> {
        if scores.is_empty() {
            return None;
        }
        let sorted = sorted_copy(scores);
        let n = scores.len() as f64;
        let m = compensated_sum(scores.iter().copied()) / n;
        let ss = compensated_sum(scores.iter().map(|s| (s - m) * (s - m)));
        let std = if scores.len() > 1 {
            (ss / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(SplitRow {
            group: group.to_owned(),
            count: scores.len(),
            mean: m,
            std,
            min: sorted[0],
            p10: nearest_rank(&sorted, 0.10),
            p50: nearest_rank(&sorted, 0.50),
            p90: nearest_rank(&sorted, 0.90),
            max: sorted[sorted.len() - 1],
        })
    }
}

/// Mean over all tokens vs mean over private tokens, for one sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequencePair {
    pub id: String,
    pub all_tokens_mean: f64,
    pub private_tokens_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivateSplit {
    /// `None` when no masked token is private.
    pub private: Option<SplitRow>,
    pub non_private: Option<SplitRow>,
    pub pairs: Vec<SequencePair>,
}

impl PrivateSplit {
    pub fn masked_tokens(&self) -> usize {
        self.private.as_ref().map_or(0, |r| r.count)
            + self.non_private.as_ref().map_or(0, |r| r.count)
    }
}

/// Splits scored tokens of masked records into private and non-private.
pub fn private_split_stats(records: &[SequenceSignal], scores: &ScoreSet) -> Result<PrivateSplit> {
    if !records.iter().any(|r| r.priv_mask.is_some()) {
        return Err(Error::NoMaskedRecords);
    }
    let mut private = Vec::new();
    let mut non_private = Vec::new();
    let mut pairs = Vec::new();
    for rec in records.iter().filter(|r| r.priv_mask.is_some()) {
        let Some(ts) = scores.tokens_of(&rec.id) else {
            continue;
        };
        let mask = rec.scored_priv_mask().unwrap_or(&[]);
        if mask.len() != ts.len() {
            return Err(Error::LengthMismatch {
                id: rec.id.clone(),
                field: "priv_mask",
                expected: ts.len() + 1,
                found: mask.len() + 1,
            });
        }
        let mut mine = Vec::new();
        for (&s, &p) in ts.iter().zip(mask) {
            if p {
                private.push(s);
                mine.push(s);
            } else {
                non_private.push(s);
            }
        }
        pairs.push(SequencePair {
            id: rec.id.clone(),
            all_tokens_mean: mean(ts)?,
            private_tokens_mean: mean(&mine).ok(),
        });
    }
    Ok(PrivateSplit {
        private: SplitRow::from_scores("private", &private),
        non_private: SplitRow::from_scores("non-private", &non_private),
        pairs,
    })
}

/// Pearson correlation coefficient.
pub fn score_correlation(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::DegenerateVariance);
    }
    let mx = mean(xs)?;
    let my = mean(ys)?;
    let sxy = compensated_sum(xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)));
    let sxx = compensated_sum(xs.iter().map(|x| (x - mx) * (x - mx)));
    let syy = compensated_sum(ys.iter().map(|y| (y - my) * (y - my)));
    if !(sxx > 0.0 && syy > 0.0) {
        return Err(Error::DegenerateVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Correlation between sequence scores and private-token means, over
/// sequences that contain at least one private token.
pub fn sequence_private_correlation(ranked: &[RankedSequence]) -> Result<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = ranked
        .iter()
        .filter_map(|r| r.private_token_mean.map(|p| (r.sequence_score, p)))
        .unzip();
    score_correlation(&xs, &ys)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankBy {
    SequenceMean,
    PrivateTokenMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedSequence {
    pub id: String,
    pub sequence_score: f64,
    pub private_token_mean: Option<f64>,
    pub private_tokens: usize,
}

/// Joins sequence scores with per-record private-token means.
pub fn ranking_entries(records: &[SequenceSignal], scores: &ScoreSet) -> Vec<RankedSequence> {
    records
        .iter()
        .filter_map(|rec| {
            let &seq = scores.seq_scores.get(&rec.id)?;
            let private: Vec<f64> = match (scores.tokens_of(&rec.id), rec.scored_priv_mask()) {
                (Some(ts), Some(mask)) => ts
                    .iter()
                    .zip(mask)
                    .filter(|(_, &p)| p)
                    .map(|(&s, _)| s)
                    .collect(),
                _ => Vec::new(),
            };
            Some(RankedSequence {
                id: rec.id.clone(),
                sequence_score: seq,
                private_token_mean: mean(&private).ok(),
                private_tokens: private.len(),
            })
        })
        .collect()
}

/// Top `k` entries by the chosen key, descending; ties by id ascending.
/// Ranking by private-token mean skips sequences without private tokens.
pub fn top_k_sequences(entries: &[RankedSequence], k: usize, by: RankBy) -> Vec<RankedSequence> {
    let key = |r: &RankedSequence| match by {
        RankBy::SequenceMean => Some(r.sequence_score),
        RankBy::PrivateTokenMean => r.private_token_mean,
    };
    let mut v: Vec<(f64, &RankedSequence)> = entries
        .iter()
        .filter_map(|r| key(r).map(|s| (s, r)))
        .collect();
    v.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.id.cmp(&b.1.id)));
    v.into_iter().take(k).map(|(_, r)| r.clone()).collect()
}

pub fn write_group_csv(rows: &[GroupSummary], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let err = |e: csv::Error| Error::io("<output>", e.into());
    out.write_record([
        "group",
        "count",
        "mean_score",
        "median_score",
        "p95",
        "n_high",
        "high_rate",
    ])
    .map_err(err)?;
    for r in rows {
        out.write_record([
            r.group.clone(),
            r.count.to_string(),
            r.mean_score.to_string(),
            r.median_score.to_string(),
            r.p95.to_string(),
            r.n_high.to_string(),
            r.high_rate.to_string(),
        ])
        .map_err(err)?;
    }
    out.flush().map_err(|e| Error::io("<output>", e))
}

pub fn write_split_csv(split: &PrivateSplit, w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let err = |e: csv::Error| Error::io("<output>", e.into());
    out.write_record([
        "group", "count", "mean", "std", "min", "p10", "p50", "p90", "max",
    ])
    .map_err(err)?;
    for (name, row) in [
        ("private", &split.private),
        ("non-private", &split.non_private),
    ] {
        match row {
            Some(r) => out.write_record([
                r.group.clone(),
                r.count.to_string(),
                r.mean.to_string(),
                r.std.to_string(),
                r.min.to_string(),
                r.p10.to_string(),
                r.p50.to_string(),
                r.p90.to_string(),
                r.max.to_string(),
            ]),
            None => out.write_record([name, "0", "", "", "", "", "", "", ""]),
        }
        .map_err(err)?;
    }
    out.flush().map_err(|e| Error::io("<output>", e))
}
