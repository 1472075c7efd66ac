//! Score sets, attack dispatch over whole datasets, and score-file I/O.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines;
use crate::config::AttackConfig;
use crate::data::{PopulationSignal, SequenceSignal};
use crate::error::{Error, Result};
use crate::informia::InfoRmiaPopulation;
use crate::prob_algebra::WeightVector;
use crate::rmia::RmiaPopulation;
use crate::token::{self, Aggregation};

/// Every score in the engine follows this orientation.
pub const ORIENTATION: &str = "higher_is_member";

/// Membership scores of one attack.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreSet {
    pub attack: String,
    pub seq_scores: BTreeMap<String, f64>,
    /// Per-position scores, `tokens.len()` entries per record.
    pub token_scores: Option<BTreeMap<String, Vec<f64>>>,
}

impl ScoreSet {
    pub fn new(attack: impl Into<String>) -> Self {
        ScoreSet {
            attack: attack.into(),
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.seq_scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seq_scores.is_empty()
    }

    pub fn tokens_of(&self, id: &str) -> Option<&[f64]> {
        self.token_scores.as_ref()?.get(id).map(Vec::as_slice)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Attack {
    Rmia,
    InfoRmia,
    InfoRmiaToken(Aggregation),
    Loss,
    Zlib,
    MinK,
    MinKpp,
    Ref(usize),
}

impl Attack {
    /// Parses a CLI attack name. Aggregation and reference index are supplied separately.
    pub fn parse(name: &str, agg: Aggregation, ref_index: usize) -> Result<Self> {
        Ok(match name {
            "rmia" => Attack::Rmia,
            "informia" => Attack::InfoRmia,
            "informia-token" => Attack::InfoRmiaToken(agg),
            "loss" => Attack::Loss,
            "zlib" => Attack::Zlib,
            "mink" => Attack::MinK,
            "minkpp" => Attack::MinKpp,
            "ref" => Attack::Ref(ref_index),
            other => return Err(Error::Config(format!("unknown attack '{other}'"))),
        })
    }

    pub fn name(&self) -> String {
        match self {
            Attack::Rmia => "rmia".into(),
            Attack::InfoRmia => "informia".into(),
            Attack::InfoRmiaToken(Aggregation::Mean) => "informia-token-mean".into(),
            Attack::InfoRmiaToken(Aggregation::MinK) => "informia-token-mink".into(),
            Attack::Loss => "loss".into(),
            Attack::Zlib => "zlib".into(),
            Attack::MinK => "mink".into(),
            Attack::MinKpp => "minkpp".into(),
            Attack::Ref(i) => format!("ref{i}"),
        }
    }

    pub fn needs_population(&self) -> bool {
        matches!(self, Attack::Rmia | Attack::InfoRmia)
    }

    pub fn needs_tokens(&self) -> bool {
        !self.needs_population()
    }
}

enum Prepared {
    Rmia(RmiaPopulation),
    InfoRmia(InfoRmiaPopulation, Option<WeightVector>),
    None,
}

fn prepare(
    attack: Attack,
    population: Option<&[PopulationSignal]>,
    cfg: &AttackConfig,
) -> Result<Prepared> {
    if !attack.needs_population() {
        return Ok(Prepared::None);
    }
    let population = population.ok_or(Error::EmptyPopulation)?;
    Ok(match attack {
        Attack::Rmia => Prepared::Rmia(RmiaPopulation::prepare(population, cfg)?),
        _ => {
            let pop = InfoRmiaPopulation::prepare(population, cfg)?;
            let raw = (!cfg.normalize_population)
                .then(|| WeightVector::new(pop.raw_prior().to_vec()))
                .transpose()?;
            Prepared::InfoRmia(pop, raw)
        }
    })
}

fn score_one(
    attack: Attack,
    prepared: &Prepared,
    rec: &SequenceSignal,
    cfg: &AttackConfig,
) -> Result<(f64, Option<Vec<f64>>)> {
    let seq = |s: Result<f64>| s.map(|v| (v, None));
    match (attack, prepared) {
        (Attack::Rmia, Prepared::Rmia(pop)) => seq(pop.score(rec, cfg)),
        (Attack::InfoRmia, Prepared::InfoRmia(pop, None)) => {
            seq(pop.score(rec, cfg).map(|p| p.total))
        }
        (Attack::InfoRmia, Prepared::InfoRmia(pop, Some(w))) => {
            seq(pop.score_unnormalized(rec, w, cfg))
        }
        (Attack::InfoRmiaToken(agg), _) => {
            let (v, s) = token::score_sequence_via_tokens(rec, agg, cfg)?;
            Ok((s, Some(v.scores)))
        }
        (Attack::Loss, _) => seq(baselines::loss_attack(rec)),
        (Attack::Zlib, _) => seq(baselines::zlib_attack_stored(rec)),
        (Attack::MinK, _) => seq(baselines::min_k_attack(rec, cfg.k_percent)),
        (Attack::MinKpp, _) => seq(baselines::min_k_pp_attack(rec, cfg.k_percent)),
        (Attack::Ref(i), _) => seq(baselines::ref_attack(rec, i)),
        _ => unreachable!("population prepared for a different attack"),
    }
}

/// Scores every record. Records are processed in parallel; the result is
/// independent of scheduling.
pub fn score_dataset(
    attack: Attack,
    records: &[SequenceSignal],
    population: Option<&[PopulationSignal]>,
    cfg: &AttackConfig,
) -> Result<ScoreSet> {
    cfg.validate()?;
    let prepared = prepare(attack, population, cfg)?;
    let scored = records
        .par_iter()
        .map(|rec| {
            let (s, toks) = score_one(attack, &prepared, rec, cfg)?;
            let finite = s.is_finite()
                && toks
                    .as_ref()
                    .is_none_or(|t| t.iter().all(|x| x.is_finite()));
            if !finite {
                return Err(Error::NonFinite { id: rec.id.clone() });
            }
            Ok((rec.id.clone(), s, toks))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut set = ScoreSet::new(attack.name());
    if matches!(attack, Attack::InfoRmiaToken(_)) {
        set.token_scores = Some(BTreeMap::new());
    }
    for (id, s, toks) in scored {
        if let (Some(t), Some(map)) = (toks, set.token_scores.as_mut()) {
            map.insert(id.clone(), t);
        }
        set.seq_scores.insert(id, s);
    }
    Ok(set)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreFormat {
    Csv,
    Jsonl,
}

impl ScoreFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => ScoreFormat::Jsonl,
            _ => ScoreFormat::Csv,
        }
    }
}

impl std::str::FromStr for ScoreFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ScoreFormat::Csv),
            "jsonl" => Ok(ScoreFormat::Jsonl),
            other => Err(Error::Config(format!("unknown score format '{other}'"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct JsonlHeader {
    attack: String,
    orientation: String,
}

#[derive(Serialize, Deserialize)]
struct JsonlRow {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    position: Option<usize>,
    score: f64,
}

const CSV_HEADER: [&str; 4] = ["attack", "id", "position", "score"];

fn csv_err(e: csv::Error) -> Error {
    Error::Parse {
        line: e.position().map_or(0, |p| p.line() as usize),
        message: e.to_string(),
    }
}

impl ScoreSet {
    /// Rows in id order: the sequence score first, then 1-based token positions.
    fn rows(&self) -> impl Iterator<Item = (&str, Option<usize>, f64)> {
        self.seq_scores.iter().flat_map(move |(id, &s)| {
            let toks = self.tokens_of(id).unwrap_or(&[]);
            std::iter::once((id.as_str(), None, s)).chain(
                toks.iter()
                    .enumerate()
                    .map(move |(i, &t)| (id.as_str(), Some(i + 1), t)),
            )
        })
    }

    pub fn write(&self, w: impl Write, format: ScoreFormat) -> Result<()> {
        match format {
            ScoreFormat::Csv => self.write_csv(w),
            ScoreFormat::Jsonl => self.write_jsonl(w),
        }
    }

    fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(CSV_HEADER).map_err(csv_err)?;
        for (id, pos, s) in self.rows() {
            let pos = pos.map(|p| p.to_string()).unwrap_or_default();
            out.write_record([self.attack.as_str(), id, &pos, &format!("{s:?}")])
                .map_err(csv_err)?;
        }
        out.flush().map_err(|e| Error::io("<output>", e))
    }

    fn write_jsonl(&self, mut w: impl Write) -> Result<()> {
        let io = |e: std::io::Error| Error::io("<output>", e);
        let header = JsonlHeader {
            attack: self.attack.clone(),
            orientation: ORIENTATION.into(),
        };
        serde_json::to_writer(&mut w, &header).map_err(|e| io(e.into()))?;
        writeln!(w).map_err(io)?;
        for (id, position, score) in self.rows() {
            let row = JsonlRow {
                id: id.to_owned(),
                position,
                score,
            };
            serde_json::to_writer(&mut w, &row).map_err(|e| io(e.into()))?;
            writeln!(w).map_err(io)?;
        }
        Ok(())
    }

    pub fn read(r: impl Read, format: ScoreFormat) -> Result<Self> {
        let mut set = ScoreSet::default();
        let mut tokens: BTreeMap<String, Vec<(usize, f64)>> = BTreeMap::new();
        let mut push =
            |set: &mut ScoreSet, line: usize, id: String, pos: Option<usize>, s: f64| match pos {
                None => {
                    if set.seq_scores.insert(id.clone(), s).is_some() {
                        return Err(Error::DuplicateId { line, id });
                    }
                    Ok(())
                }
                Some(p) => {
                    tokens.entry(id).or_default().push((p, s));
                    Ok(())
                }
            };
        match format {
            ScoreFormat::Csv => {
                let mut rdr = csv::Reader::from_reader(r);
                for (i, row) in rdr.records().enumerate() {
                    let row = row.map_err(csv_err)?;
                    let line = i + 2;
                    let bad = |m: String| Error::Parse { line, message: m };
                    if row.len() != 4 {
                        return Err(bad(format!("expected 4 columns, found {}", row.len())));
                    }
                    if set.attack.is_empty() {
                        set.attack = row[0].to_owned();
                    }
                    let pos = match &row[2] {
                        "" => None,
                        p => Some(p.parse::<usize>().map_err(|e| bad(e.to_string()))?),
                    };
                    let s = row[3].parse::<f64>().map_err(|e| bad(e.to_string()))?;
                    push(&mut set, line, row[1].to_owned(), pos, s)?;
                }
            }
            ScoreFormat::Jsonl => {
                let mut lines = BufReader::new(r).lines().enumerate();
                let parse = |line: usize, e: serde_json::Error| Error::Parse {
                    line,
                    message: e.to_string(),
                };
                let mut header_seen = false;
                for (i, line) in lines.by_ref() {
                    let line_no = i + 1;
                    let line = line.map_err(|e| Error::io("<input>", e))?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    if !header_seen {
                        let h: JsonlHeader =
                            serde_json::from_str(&line).map_err(|e| parse(line_no, e))?;
                        if h.orientation != ORIENTATION {
                            return Err(Error::Header(format!(
                                "unsupported orientation '{}'",
                                h.orientation
                            )));
                        }
                        set.attack = h.attack;
                        header_seen = true;
                        continue;
                    }
                    let row: JsonlRow =
                        serde_json::from_str(&line).map_err(|e| parse(line_no, e))?;
                    push(&mut set, line_no, row.id, row.position, row.score)?;
                }
                if !header_seen {
                    return Err(Error::Header("score file has no header line".into()));
                }
            }
        }
        if !tokens.is_empty() {
            let mut map = BTreeMap::new();
            for (id, mut rows) in tokens {
                rows.sort_by_key(|(p, _)| *p);
                if rows.iter().enumerate().any(|(i, (p, _))| *p != i + 1) {
                    return Err(Error::InvalidRecord {
                        id,
                        message: "token positions are not 1..n".into(),
                    });
                }
                map.insert(id, rows.into_iter().map(|(_, s)| s).collect());
            }
            set.token_scores = Some(map);
        }
        Ok(set)
    }

    pub fn save(&self, path: impl AsRef<Path>, format: ScoreFormat) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write(&mut w, format)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(file, ScoreFormat::from_path(path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Label, TokenSignal};
    use proptest::prelude::*;

    fn sample() -> ScoreSet {
        let mut s = ScoreSet::new("informia-token-mean");
        s.seq_scores.insert("b,quoted".into(), 0.1 + 0.2);
        s.seq_scores.insert("a".into(), -1.0 / 3.0);
        let mut t = BTreeMap::new();
        t.insert("a".into(), vec![1e-300, -2.5, std::f64::consts::PI]);
        t.insert("b,quoted".into(), vec![0.0]);
        s.token_scores = Some(t);
        s
    }

    #[test]
    fn csv_layout_and_round_trip() {
        let s = sample();
        let mut buf = Vec::new();
        s.write(&mut buf, ScoreFormat::Csv).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "attack,id,position,score");
        assert_eq!(lines[1], "informia-token-mean,a,,-0.3333333333333333");
        assert_eq!(lines[2], "informia-token-mean,a,1,1e-300");
        assert!(lines[5].starts_with("informia-token-mean,\"b,quoted\","));
        assert_eq!(ScoreSet::read(buf.as_slice(), ScoreFormat::Csv).unwrap(), s);
    }

    #[test]
    fn jsonl_round_trip() {
        let s = sample();
        let mut buf = Vec::new();
        s.write(&mut buf, ScoreFormat::Jsonl).unwrap();
        assert_eq!(
            ScoreSet::read(buf.as_slice(), ScoreFormat::Jsonl).unwrap(),
            s
        );
    }

    #[test]
    fn empty_set_is_header_only() {
        let s = ScoreSet::new("loss");
        let mut buf = Vec::new();
        s.write(&mut buf, ScoreFormat::Csv).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "attack,id,position,score\n"
        );
        let mut buf = Vec::new();
        s.write(&mut buf, ScoreFormat::Jsonl).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap().lines().count(), 1);
        assert_eq!(
            ScoreSet::read(buf.as_slice(), ScoreFormat::Jsonl).unwrap(),
            s
        );
    }

    #[test]
    fn rejects_duplicate_sequence_rows() {
        let text = "attack,id,position,score\nx,a,,1\nx,a,,2\n";
        assert!(matches!(
            ScoreSet::read(text.as_bytes(), ScoreFormat::Csv),
            Err(Error::DuplicateId { .. })
        ));
    }

    #[test]
    fn attack_names_parse() {
        for name in [
            "rmia",
            "informia",
            "informia-token",
            "loss",
            "zlib",
            "mink",
            "minkpp",
            "ref",
        ] {
            Attack::parse(name, Aggregation::Mean, 0).unwrap();
        }
        assert!(Attack::parse("lira", Aggregation::Mean, 0).is_err());
        assert_eq!(
            Attack::parse("ref", Aggregation::Mean, 2).unwrap().name(),
            "ref2"
        );
    }

    #[test]
    fn dispatch_requires_population_and_tokens() {
        let rec = SequenceSignal::new("a", Label::Member, 0.5, vec![0.4]);
        let cfg = AttackConfig::default();
        assert!(matches!(
            score_dataset(Attack::Rmia, std::slice::from_ref(&rec), None, &cfg),
            Err(Error::EmptyPopulation)
        ));
        assert!(matches!(
            score_dataset(Attack::Loss, &[rec], None, &cfg),
            Err(Error::MissingTokens(_))
        ));
    }

    #[test]
    fn token_attack_records_vectors() {
        let mut rec = SequenceSignal::new("a", Label::Member, 0.5, vec![0.4]);
        let mut t = TokenSignal::new(-0.2, vec![-0.9]);
        t.kl_refavg_target = Some(0.05);
        rec.tokens = Some(vec![t.clone(), t]);
        let set = score_dataset(
            Attack::InfoRmiaToken(Aggregation::Mean),
            &[rec],
            None,
            &AttackConfig::default(),
        )
        .unwrap();
        assert_eq!(set.tokens_of("a").unwrap().len(), 2);
        assert_eq!(set.seq_scores["a"], set.tokens_of("a").unwrap()[0]);
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_lossless(scores in prop::collection::vec(-1e6f64..1e6, 0..40)) {
            let mut s = ScoreSet::new("x");
            for (i, v) in scores.iter().enumerate() {
                s.seq_scores.insert(format!("r{i}"), *v);
            }
            let mut buf = Vec::new();
            s.write(&mut buf, ScoreFormat::Csv).unwrap();
            let back = ScoreSet::read(buf.as_slice(), ScoreFormat::Csv).unwrap();
            prop_assert_eq!(back.seq_scores, s.seq_scores);
        }
    }
}
