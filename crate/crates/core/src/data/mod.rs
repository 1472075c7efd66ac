//! Domain records and the JSONL ingestion format.
//!
//! A dataset file is a header line followed by one JSON object per line:
//!
//! ```text
//! {"schema":"leakscope/1","seq_signal":"geo_mean","log":"nat"}
//! {"id":"a","label":"member","p_target":0.31,"p_refs":[0.2,0.25]}
//! ```
//!
//! Probabilities are floored at load time; log-probabilities are natural logs.

mod io;
mod validate;

use serde::{Deserialize, Serialize};

pub use io::{load_dataset, AnyDataset, Dataset, DatasetKind, Record};
pub use validate::{position_moments, reference_average, validate_token_block, TokenBlockReport};

pub const SCHEMA: &str = "leakscope/1";

/// How the producer computed sequence-level probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeqSignal {
    /// True-class softmax probability (classifiers).
    TrueClass,
    /// Geometric mean of per-token probabilities (language models).
    GeoMean,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header {
    pub schema: String,
    pub seq_signal: SeqSignal,
    pub log: String,
}

impl Header {
    pub fn new(seq_signal: SeqSignal) -> Self {
        Header {
            schema: SCHEMA.to_owned(),
            seq_signal,
            log: "nat".to_owned(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Member,
    Nonmember,
    #[default]
    Unknown,
}

/// Signals for one next-token prediction step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenSignal {
    /// `ln p(x_t | x_<t, θ)` for the ground-truth token.
    pub gt_logprob_target: f64,
    /// The same under each reference model.
    #[serde(default)]
    pub gt_logprob_refs: Vec<f64>,
    /// `E_{v~p(·|θ)}[ln p(v|θ)]` at this position.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_target: Option<f64>,
    /// Standard deviation of `ln p(v|θ)` under the same distribution.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_target: Option<f64>,
    /// `D_KL(p̄_ref || p(·|θ))` in nats, `p̄_ref` the reference average.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kl_refavg_target: Option<f64>,
    /// Vocabulary index of the ground-truth token; needed only with full distributions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_token: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full_dist_target: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full_dist_refs: Option<Vec<Vec<f64>>>,
}

impl TokenSignal {
    pub fn new(gt_logprob_target: f64, gt_logprob_refs: Vec<f64>) -> Self {
        TokenSignal {
            gt_logprob_target,
            gt_logprob_refs,
            mu_target: None,
            sigma_target: None,
            kl_refavg_target: None,
            gt_token: None,
            full_dist_target: None,
            full_dist_refs: None,
        }
    }

    pub fn has_full_dist(&self) -> bool {
        self.full_dist_target.is_some() && self.full_dist_refs.is_some()
    }
}

/// One evaluation record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSignal {
    pub id: String,
    #[serde(default)]
    pub label: Label,
    pub p_target: f64,
    pub p_refs: Vec<f64>,
    /// Predicted positions `1..k` of a length-`k` sequence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<TokenSignal>>,
    /// All `k` token strings, including the unscored first token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_texts: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tags: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priv_mask: Option<Vec<bool>>,
    /// DEFLATE-compressed byte length of the raw text (for the Zlib baseline).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zlib_bytes: Option<u64>,
}

impl SequenceSignal {
    pub fn new(id: impl Into<String>, label: Label, p_target: f64, p_refs: Vec<f64>) -> Self {
        SequenceSignal {
            id: id.into(),
            label,
            p_target,
            p_refs,
            tokens: None,
            token_texts: None,
            tags: None,
            priv_mask: None,
            zlib_bytes: None,
        }
    }

    pub fn tokens(&self) -> crate::Result<&[TokenSignal]> {
        self.tokens
            .as_deref()
            .ok_or_else(|| crate::Error::MissingTokens(self.id.clone()))
    }

    /// Tag of each predicted position (`token_texts[1..]` alignment).
    pub fn scored_tags(&self) -> Option<&[String]> {
        self.tags.as_deref().map(|t| t.get(1..).unwrap_or(&[]))
    }

    /// Privacy flag of each predicted position.
    pub fn scored_priv_mask(&self) -> Option<&[bool]> {
        self.priv_mask.as_deref().map(|m| m.get(1..).unwrap_or(&[]))
    }
}

/// One population point `z` for the sequence-level attacks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSignal {
    pub id: String,
    pub p_target: f64,
    pub p_refs: Vec<f64>,
}

impl PopulationSignal {
    pub fn new(id: impl Into<String>, p_target: f64, p_refs: Vec<f64>) -> Self {
        PopulationSignal {
            id: id.into(),
            p_target,
            p_refs,
        }
    }
}
