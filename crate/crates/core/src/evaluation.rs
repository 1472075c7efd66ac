//! ROC construction, AUC and TPR at fixed FPR.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{Label, SequenceSignal};
use crate::error::{CoverageGap, Error, Result};
use crate::scores::ScoreSet;

pub type Labels = BTreeMap<String, Label>;

pub fn labels_of(records: &[SequenceSignal]) -> Labels {
    records.iter().map(|r| (r.id.clone(), r.label)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Records scoring at or above this value are called members.
    pub threshold: f64,
    pub false_positives: usize,
    pub true_positives: usize,
}

/// Empirical ROC curve from `(0,0)` to `(1,1)`, one step per distinct score.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub members: usize,
    pub nonmembers: usize,
}

/// Builds the curve from `(score, is_member)` pairs.
pub fn roc_from_pairs(pairs: &[(f64, bool)]) -> Result<RocCurve> {
    let members = pairs.iter().filter(|p| p.1).count();
    let nonmembers = pairs.len() - members;
    if members == 0 || nonmembers == 0 {
        return Err(Error::OneClass {
            members,
            nonmembers,
        });
    }
    if pairs.iter().any(|p| !p.0.is_finite()) {
        return Err(Error::NonFinite {
            id: "<score>".into(),
        });
    }
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));

    let (pos, neg) = (members as f64, nonmembers as f64);
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
        false_positives: 0,
        true_positives: 0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let threshold = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == threshold {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / neg,
            tpr: tp as f64 / pos,
            threshold,
            false_positives: fp,
            true_positives: tp,
        });
    }
    Ok(RocCurve {
        points,
        members,
        nonmembers,
    })
}

/// ROC of a score set against member/nonmember labels. Unknown labels are skipped.
pub fn roc(scores: &ScoreSet, labels: &Labels) -> Result<RocCurve> {
    let mut pairs = Vec::with_capacity(labels.len());
    let mut missing = Vec::new();
    for (id, label) in labels {
        let is_member = match label {
            Label::Member => true,
            Label::Nonmember => false,
            Label::Unknown => continue,
        };
        match scores.seq_scores.get(id) {
            Some(&s) if !s.is_finite() => return Err(Error::NonFinite { id: id.clone() }),
            Some(&s) => pairs.push((s, is_member)),
            None => missing.push(id.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Coverage(vec![CoverageGap {
            attack: scores.attack.clone(),
            missing,
        }]));
    }
    roc_from_pairs(&pairs)
}

/// Trapezoidal area under the curve. Tied groups contribute a diagonal
/// segment, which counts member/nonmember ties as one half.
pub fn auc(curve: &RocCurve) -> f64 {
    curve
        .points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) * 0.5)
        .sum()
}

/// TPR at the largest empirical FPR not exceeding `fpr_target`.
pub fn tpr_at_fpr(curve: &RocCurve, fpr_target: f64) -> f64 {
    let allowed = fpr_target * curve.nonmembers as f64;
    curve
        .points
        .iter()
        .filter(|p| p.false_positives as f64 <= allowed + 1e-9)
        .map(|p| p.tpr)
        .fold(0.0, f64::max)
}

impl RocCurve {
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::io("<output>", e.into());
        out.write_record(["fpr", "tpr", "threshold"]).map_err(err)?;
        for p in &self.points {
            out.write_record([
                p.fpr.to_string(),
                p.tpr.to_string(),
                p.threshold.to_string(),
            ])
            .map_err(err)?;
        }
        out.flush().map_err(|e| Error::io("<output>", e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub attack: String,
    pub auc: f64,
    pub tpr_at_1pct: f64,
    pub tpr_at_0p1pct: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

/// One row per score set, in input order.
pub fn compare_attacks(score_sets: &[ScoreSet], labels: &Labels) -> Result<ComparisonTable> {
    let mut gaps = Vec::new();
    let mut rows = Vec::new();
    for set in score_sets {
        match roc(set, labels) {
            Ok(curve) => rows.push(ComparisonRow {
                attack: set.attack.clone(),
                auc: auc(&curve),
                tpr_at_1pct: tpr_at_fpr(&curve, 0.01),
                tpr_at_0p1pct: tpr_at_fpr(&curve, 0.001),
            }),
            Err(Error::Coverage(mut g)) => gaps.append(&mut g),
            Err(e) => return Err(e),
        }
    }
    if !gaps.is_empty() {
        return Err(Error::Coverage(gaps));
    }
    Ok(ComparisonTable { rows })
}

impl ComparisonTable {
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::io("<output>", e.into());
        out.write_record(["attack", "auc", "tpr_at_1pct", "tpr_at_0p1pct"])
            .map_err(err)?;
        for r in &self.rows {
            out.write_record([
                r.attack.clone(),
                r.auc.to_string(),
                r.tpr_at_1pct.to_string(),
                r.tpr_at_0p1pct.to_string(),
            ])
            .map_err(err)?;
        }
        out.flush().map_err(|e| Error::io("<output>", e))
    }

    /// Column-aligned plain text.
    pub fn to_text(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.attack.len())
            .chain(std::iter::once("attack".len()))
            .max()
            .unwrap_or(6);
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<width$}  {:>8}  {:>10}  {:>11}",
            "attack", "AUC", "TPR@1%FPR", "TPR@0.1%FPR"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<width$}  {:>8.4}  {:>9.2}%  {:>10.2}%",
                r.attack,
                r.auc,
                r.tpr_at_1pct * 100.0,
                r.tpr_at_0p1pct * 100.0
            );
        }
        s
    }
}
