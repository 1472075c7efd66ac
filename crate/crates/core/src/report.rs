//! Static HTML token heatmaps and score-file emission.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::audit::nearest_rank;
use crate::data::SequenceSignal;
use crate::error::{Error, Result};
use crate::scores::{ScoreFormat, ScoreSet};

/// Renderable token view of one sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapPayload {
    pub id: String,
    pub sequence_score: Option<f64>,
    pub token_texts: Vec<String>,
    /// Raw score per token; `None` for the unscored first token.
    pub scores: Vec<Option<f64>>,
    /// Highlight strength in `[0, 1]`.
    pub intensities: Vec<f64>,
    pub tags: Vec<String>,
    pub private: Vec<bool>,
}

/// Clipping window `[p1, p99]` over every token score in a report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntensityScale {
    pub low: f64,
    pub high: f64,
}

impl IntensityScale {
    pub fn fit(scores: &[f64]) -> Option<Self> {
        if scores.is_empty() {
            return None;
        }
        let mut sorted = scores.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(IntensityScale {
            low: nearest_rank(&sorted, 0.01),
            high: nearest_rank(&sorted, 0.99),
        })
    }

    pub fn intensity(&self, score: f64) -> f64 {
        if self.high <= self.low {
            0.5
        } else {
            ((score - self.low) / (self.high - self.low)).clamp(0.0, 1.0)
        }
    }
}

/// Builds payloads for `records`, in the given order. Intensities are
/// scaled over all token scores of these records together.
pub fn build_payloads<'a>(
    records: impl IntoIterator<Item = &'a SequenceSignal>,
    scores: &ScoreSet,
) -> Result<Vec<HeatmapPayload>> {
    let records: Vec<&SequenceSignal> = records.into_iter().collect();
    let mut all = Vec::new();
    for rec in &records {
        if let Some(ts) = scores.tokens_of(&rec.id) {
            all.extend_from_slice(ts);
        }
    }
    let scale = IntensityScale::fit(&all);

    records
        .into_iter()
        .map(|rec| {
            let ts = scores
                .tokens_of(&rec.id)
                .ok_or_else(|| Error::InvalidRecord {
                    id: rec.id.clone(),
                    message: "no token scores for this record".into(),
                })?;
            let n = ts.len() + 1;
            let texts = match &rec.token_texts {
                Some(t) if t.len() == n => t.clone(),
                Some(t) => {
                    return Err(Error::LengthMismatch {
                        id: rec.id.clone(),
                        field: "token_texts",
                        expected: n,
                        found: t.len(),
                    })
                }
                None => (0..n).map(|i| format!("[{i}]")).collect(),
            };
            let scale = scale.expect("non-empty when a record has token scores");
            let mut score_col = vec![None];
            score_col.extend(ts.iter().map(|&s| Some(s)));
            let mut intensities = vec![0.0];
            intensities.extend(ts.iter().map(|&s| scale.intensity(s)));
            Ok(HeatmapPayload {
                id: rec.id.clone(),
                sequence_score: scores.seq_scores.get(&rec.id).copied(),
                token_texts: texts,
                scores: score_col,
                intensities,
                tags: rec.tags.clone().unwrap_or_else(|| vec![String::new(); n]),
                private: rec.priv_mask.clone().unwrap_or_else(|| vec![false; n]),
            })
        })
        .collect()
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

const STYLE: &str = "\
body{font-family:system-ui,sans-serif;margin:2rem;color:#1f2328;background:#fff}\
h1{font-size:1.3rem}\
.seq{border:1px solid #d0d7de;border-radius:6px;padding:.75rem;margin:0 0 1rem 0}\
.meta{font-size:.8rem;color:#57606a;margin-bottom:.4rem}\
.text{font-family:ui-monospace,monospace;white-space:pre-wrap;line-height:1.8}\
.tok{border-radius:2px}\
.tok.unscored{color:#8c959f}\
.tok.private{outline:1px dashed #0969da}\
.legend{font-size:.8rem;color:#57606a;margin-bottom:1rem}";

/// Renders one self-contained HTML page. Sequences appear in input order.
pub fn render_heatmap(payloads: &[HeatmapPayload], title: &str) -> Result<String> {
    if payloads.is_empty() {
        return Err(Error::Empty("heatmap payloads"));
    }
    let mut html = String::new();
    let _ = write!(
        html,
        "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\" />\n<title>{t}</title>\n<style>{STYLE}</style>\n</head>\n<body>\n<h1>{t}</h1>\n<p class=\"legend\">Highlight darkness is proportional to the token membership score, clipped to the report's 1st–99th percentile. Dashed outline: private token.</p>\n",
        t = escape(title)
    );
    for p in payloads {
        let seq = p
            .sequence_score
            .map(|s| format!(" data-sequence-score=\"{s}\""))
            .unwrap_or_default();
        let _ = write!(
            html,
            "<div class=\"seq\" data-id=\"{id}\"{seq}>\n<div class=\"meta\">{id}{shown}</div>\n<div class=\"text\">",
            id = escape(&p.id),
            shown = p
                .sequence_score
                .map(|s| format!(" · score {s:.4}"))
                .unwrap_or_default(),
        );
        for (i, text) in p.token_texts.iter().enumerate() {
            let intensity = p.intensities[i];
            let tag = &p.tags[i];
            let mut class = String::from("tok");
            if p.scores[i].is_none() {
                class.push_str(" unscored");
            }
            if p.private[i] {
                class.push_str(" private");
            }
            let score_attr = p.scores[i]
                .map(|s| format!(" data-score=\"{s}\""))
                .unwrap_or_default();
            let tag_attr = if tag.is_empty() {
                String::new()
            } else {
                format!(" data-tag=\"{}\"", escape(tag))
            };
            let _ = write!(
                html,
                "<span class=\"{class}\" data-position=\"{i}\"{score_attr} data-intensity=\"{intensity:.6}\"{tag_attr} data-private=\"{private}\" style=\"background-color:rgba(220,38,38,{intensity:.6})\">{text}</span>",
                private = p.private[i],
                text = escape(text),
            );
        }
        html.push_str("</div>\n</div>\n");
    }
    html.push_str("</body>\n</html>\n");
    Ok(html)
}

pub fn write_heatmap(
    payloads: &[HeatmapPayload],
    title: &str,
    out_path: impl AsRef<Path>,
) -> Result<()> {
    let html = render_heatmap(payloads, title)?;
    let path = out_path.as_ref();
    fs::write(path, html).map_err(|e| Error::io(path, e))
}

/// Writes a score set as CSV or JSONL.
pub fn emit_scores(
    scores: &ScoreSet,
    out_path: impl AsRef<Path>,
    format: ScoreFormat,
) -> Result<()> {
    scores.save(out_path, format)
}
