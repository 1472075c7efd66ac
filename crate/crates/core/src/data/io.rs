use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{Header, PopulationSignal, SequenceSignal, TokenSignal, SCHEMA};
use crate::error::{Error, Result};

/// Tolerance for full distributions summing to one.
const DIST_SUM_TOL: f64 = 1e-6;

/// A JSONL record type with load-time validation.
pub trait Record: Serialize + DeserializeOwned + Send + Sync {
    fn id(&self) -> &str;

    /// Applies epsilon flooring and checks the record's invariants.
    /// Returns how many values were floored.
    fn sanitize(&mut self, floor: f64) -> Result<usize>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Evaluation,
    Population,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<R> {
    pub header: Header,
    pub records: Vec<R>,
    /// Number of probabilities raised to the epsilon floor during load.
    pub floored: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnyDataset {
    Evaluation(Dataset<SequenceSignal>),
    Population(Dataset<PopulationSignal>),
}

impl AnyDataset {
    pub fn len(&self) -> usize {
        match self {
            AnyDataset::Evaluation(d) => d.records.len(),
            AnyDataset::Population(d) => d.records.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn floored(&self) -> usize {
        match self {
            AnyDataset::Evaluation(d) => d.floored,
            AnyDataset::Population(d) => d.floored,
        }
    }
}

pub fn load_dataset(path: impl AsRef<Path>, kind: DatasetKind, floor: f64) -> Result<AnyDataset> {
    Ok(match kind {
        DatasetKind::Evaluation => AnyDataset::Evaluation(Dataset::load(path, floor)?),
        DatasetKind::Population => AnyDataset::Population(Dataset::load(path, floor)?),
    })
}

impl<R: Record> Dataset<R> {
    pub fn new(header: Header, records: Vec<R>) -> Self {
        Dataset {
            header,
            records,
            floored: 0,
        }
    }

    pub fn load(path: impl AsRef<Path>, floor: f64) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file), floor).map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        })
    }

    pub fn read(reader: impl BufRead, floor: f64) -> Result<Self> {
        let mut header: Option<Header> = None;
        let mut records = Vec::new();
        let mut seen = HashSet::new();
        let mut floored = 0;

        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.map_err(|e| Error::io("<input>", e))?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if header.is_none() {
                let h: Header = serde_json::from_str(trimmed).map_err(|e| Error::Parse {
                    line: line_no,
                    message: format!("expected header line: {e}"),
                })?;
                if h.schema != SCHEMA {
                    return Err(Error::Header(format!(
                        "unsupported schema '{}', expected '{SCHEMA}'",
                        h.schema
                    )));
                }
                if h.log != "nat" {
                    return Err(Error::Header(format!(
                        "log convention must be 'nat', got '{}'",
                        h.log
                    )));
                }
                header = Some(h);
                continue;
            }
            let mut rec: R = serde_json::from_str(trimmed).map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            if !seen.insert(rec.id().to_owned()) {
                return Err(Error::DuplicateId {
                    line: line_no,
                    id: rec.id().to_owned(),
                });
            }
            floored += rec.sanitize(floor)?;
            records.push(rec);
        }

        let header = header.ok_or_else(|| Error::Header("file has no header line".into()))?;
        Ok(Dataset {
            header,
            records,
            floored,
        })
    }

    pub fn write(&self, mut w: impl Write) -> Result<()> {
        let to_io = |e: serde_json::Error| Error::io("<output>", e.into());
        serde_json::to_writer(&mut w, &self.header).map_err(to_io)?;
        writeln!(w).map_err(|e| Error::io("<output>", e))?;
        for rec in &self.records {
            serde_json::to_writer(&mut w, rec).map_err(to_io)?;
            writeln!(w).map_err(|e| Error::io("<output>", e))?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn get(&self, id: &str) -> Option<&R> {
        self.records.iter().find(|r| r.id() == id)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

fn floor_field(id: &str, field: &str, p: &mut f64, floor: f64) -> Result<usize> {
    if !(p.is_finite() && *p >= 0.0 && *p <= 1.0) {
        return Err(Error::Probability {
            id: id.to_owned(),
            field: field.to_owned(),
            value: *p,
        });
    }
    if *p < floor {
        *p = floor;
        Ok(1)
    } else {
        Ok(0)
    }
}

fn floor_probs(id: &str, p_target: &mut f64, p_refs: &mut [f64], floor: f64) -> Result<usize> {
    let mut n = floor_field(id, "p_target", p_target, floor)?;
    for (j, p) in p_refs.iter_mut().enumerate() {
        n += floor_field(id, &format!("p_refs[{j}]"), p, floor)?;
    }
    Ok(n)
}

fn floor_logprob(
    id: &str,
    position: usize,
    field: &str,
    lp: &mut f64,
    floor: f64,
) -> Result<usize> {
    if lp.is_nan() || *lp > 0.0 {
        return Err(Error::InvalidRecord {
            id: id.to_owned(),
            message: format!("position {position}: {field} = {lp} must be <= 0"),
        });
    }
    let min = floor.ln();
    if *lp < min {
        *lp = min;
        Ok(1)
    } else {
        Ok(0)
    }
}

fn check_dist(id: &str, position: usize, field: &str, dist: &[f64]) -> Result<()> {
    let bad = dist.iter().any(|p| !p.is_finite() || *p < 0.0);
    let sum: f64 = crate::prob_algebra::compensated_sum(dist.iter().copied());
    if bad || (sum - 1.0).abs() > DIST_SUM_TOL {
        return Err(Error::InvalidRecord {
            id: id.to_owned(),
            message: format!("position {position}: {field} is not a distribution (sum {sum})"),
        });
    }
    Ok(())
}

fn sanitize_token(id: &str, position: usize, tok: &mut TokenSignal, floor: f64) -> Result<usize> {
    let mut n = floor_logprob(
        id,
        position,
        "gt_logprob_target",
        &mut tok.gt_logprob_target,
        floor,
    )?;
    for lp in tok.gt_logprob_refs.iter_mut() {
        n += floor_logprob(id, position, "gt_logprob_refs", lp, floor)?;
    }
    let non_negative = |field: &str, v: Option<f64>| -> Result<()> {
        match v {
            Some(x) if !(x >= 0.0 && x.is_finite()) => Err(Error::InvalidRecord {
                id: id.to_owned(),
                message: format!("position {position}: {field} = {x} must be >= 0"),
            }),
            _ => Ok(()),
        }
    };
    non_negative("sigma_target", tok.sigma_target)?;
    non_negative("kl_refavg_target", tok.kl_refavg_target)?;
    if let Some(mu) = tok.mu_target {
        if !(mu.is_finite() && mu <= 0.0) {
            return Err(Error::InvalidRecord {
                id: id.to_owned(),
                message: format!("position {position}: mu_target = {mu} must be finite and <= 0"),
            });
        }
    }

    let vocab = tok.full_dist_target.as_ref().map(|d| d.len());
    if let Some(d) = &tok.full_dist_target {
        check_dist(id, position, "full_dist_target", d)?;
    }
    if let Some(refs) = &tok.full_dist_refs {
        for d in refs {
            check_dist(id, position, "full_dist_refs", d)?;
            if vocab.is_some_and(|v| v != d.len()) {
                return Err(Error::LengthMismatch {
                    id: id.to_owned(),
                    field: "full_dist_refs",
                    expected: vocab.unwrap_or_default(),
                    found: d.len(),
                });
            }
        }
    }
    if let (Some(gt), Some(v)) = (tok.gt_token, vocab) {
        if gt >= v {
            return Err(Error::InvalidRecord {
                id: id.to_owned(),
                message: format!("position {position}: gt_token {gt} outside vocabulary of {v}"),
            });
        }
    }
    Ok(n)
}

impl Record for SequenceSignal {
    fn id(&self) -> &str {
        &self.id
    }

    fn sanitize(&mut self, floor: f64) -> Result<usize> {
        let id = self.id.clone();
        let mut n = floor_probs(&id, &mut self.p_target, &mut self.p_refs, floor)?;

        let n_tokens = match self.tokens.as_mut() {
            Some(tokens) => {
                if tokens.is_empty() {
                    return Err(Error::InvalidRecord {
                        id,
                        message: "token block is present but empty".into(),
                    });
                }
                for (i, tok) in tokens.iter_mut().enumerate() {
                    n += sanitize_token(&id, i + 1, tok, floor)?;
                }
                Some(tokens.len())
            }
            None => None,
        };

        let n_texts = match (&self.token_texts, n_tokens) {
            (Some(texts), Some(k)) if texts.len() != k + 1 => {
                return Err(Error::LengthMismatch {
                    id,
                    field: "token_texts",
                    expected: k + 1,
                    found: texts.len(),
                })
            }
            (Some(texts), _) => Some(texts.len()),
            (None, Some(k)) => Some(k + 1),
            (None, None) => None,
        };

        let aligned = [
            ("tags", self.tags.as_ref().map(Vec::len)),
            ("priv_mask", self.priv_mask.as_ref().map(Vec::len)),
        ];
        for (field, len) in aligned {
            if let Some(len) = len {
                match n_texts {
                    Some(expected) if expected != len => {
                        return Err(Error::LengthMismatch {
                            id,
                            field,
                            expected,
                            found: len,
                        })
                    }
                    None => {
                        return Err(Error::InvalidRecord {
                            id,
                            message: format!("{field} given without token_texts or tokens"),
                        })
                    }
                    _ => {}
                }
            }
        }
        Ok(n)
    }
}

impl Record for PopulationSignal {
    fn id(&self) -> &str {
        &self.id
    }

    fn sanitize(&mut self, floor: f64) -> Result<usize> {
        let id = self.id.clone();
        floor_probs(&id, &mut self.p_target, &mut self.p_refs, floor)
    }
}
