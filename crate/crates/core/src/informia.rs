//! Sequence-level InfoRMIA.
//!
//! The score is the expected log-posterior advantage of `x` over the
//! population, `Σ_z p̂(z)·log(p(θ|x)/p(θ|z))`, which decomposes into
//! `log(p(x|θ)/p(x)) + D_KL(p̂(z) || p̂(z|θ))`. The KL part does not depend
//! on `x`, so [`InfoRmiaPopulation`] computes it once per population.

use serde::{Deserialize, Serialize};

use crate::config::AttackConfig;
use crate::data::{PopulationSignal, SequenceSignal};
use crate::error::{Error, Result};
use crate::prob_algebra::{floor_prob, kl_nats, normalize, CompensatedSum, WeightVector};
use crate::rmia::estimate_prior;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfoRmiaScoreParts {
    /// `log(p(x|θ)/p(x))`.
    pub gain_term: f64,
    /// `D_KL(p̂(z) || p̂(z|θ))`, constant across records.
    pub kl_term: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct InfoRmiaPopulation {
    /// Raw offline priors `p̃(z)`.
    raw_prior: Vec<f64>,
    prior: Vec<f64>,
    target: Vec<f64>,
    kl_nats: f64,
}

impl InfoRmiaPopulation {
    pub fn prepare(population: &[PopulationSignal], cfg: &AttackConfig) -> Result<Self> {
        if population.is_empty() {
            return Err(Error::EmptyPopulation);
        }
        let raw_prior = population
            .iter()
            .map(|z| estimate_prior(&z.p_refs, cfg))
            .collect::<Result<Vec<_>>>()?;
        let raw_target: Vec<f64> = population
            .iter()
            .map(|z| floor_prob(z.p_target, cfg.epsilon_floor))
            .collect();
        let prior = normalize(&WeightVector::new(raw_prior.clone())?)?.into_inner();
        let target = normalize(&WeightVector::new(raw_target)?)?.into_inner();
        let kl_nats = kl_nats(&prior, &target);
        Ok(InfoRmiaPopulation {
            raw_prior,
            prior,
            target,
            kl_nats,
        })
    }

    pub fn len(&self) -> usize {
        self.prior.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prior.is_empty()
    }

    /// Normalized population prior `p̂(z)`.
    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    /// Unnormalized priors, usable as raw weights.
    pub fn raw_prior(&self) -> &[f64] {
        &self.raw_prior
    }

    /// Normalized target likelihood `p̂(z|θ)`.
    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn kl_term(&self, cfg: &AttackConfig) -> f64 {
        cfg.log_base.from_nats(self.kl_nats)
    }

    fn record_terms(x: &SequenceSignal, cfg: &AttackConfig) -> Result<(f64, f64)> {
        let px = estimate_prior(&x.p_refs, cfg).map_err(|e| Error::InvalidRecord {
            id: x.id.clone(),
            message: e.to_string(),
        })?;
        Ok((floor_prob(x.p_target, cfg.epsilon_floor), px))
    }

    /// Decomposed form: gain plus cached KL.
    pub fn score(&self, x: &SequenceSignal, cfg: &AttackConfig) -> Result<InfoRmiaScoreParts> {
        let (px_theta, px) = Self::record_terms(x, cfg)?;
        let gain_term = cfg.log_base.log(px_theta / px);
        let kl_term = self.kl_term(cfg);
        Ok(InfoRmiaScoreParts {
            gain_term,
            kl_term,
            total: gain_term + kl_term,
        })
    }

    /// Un-decomposed form `Σ_z p̂(z)·log((p(x|θ)·p̂(z)) / (p̂(z|θ)·p(x)))`.
    pub fn score_direct(&self, x: &SequenceSignal, cfg: &AttackConfig) -> Result<f64> {
        let (px_theta, px) = Self::record_terms(x, cfg)?;
        let mut acc = CompensatedSum::new();
        for (&pz, &pz_theta) in self.prior.iter().zip(&self.target) {
            if pz > 0.0 {
                acc.add(pz * ((px_theta * pz) / (pz_theta.max(f64::MIN_POSITIVE) * px)).ln());
            }
        }
        Ok(cfg.log_base.from_nats(acc.value()))
    }

    /// `Σ_z w(z)·log(p(θ|x)/p(θ|z))` with raw, unnormalized weights.
    ///
    /// Evaluated as `C·log(p(x|θ)/p(x)) + Σ_z w(z)·log(p̂(z)/p̂(z|θ))` with
    /// `C = Σ w`. For a fixed model and population this is an increasing
    /// affine map of the gain term, so it ranks records exactly like the
    /// normalized score; the values themselves are not comparable across
    /// populations.
    pub fn score_unnormalized(
        &self,
        x: &SequenceSignal,
        raw_weights: &WeightVector,
        cfg: &AttackConfig,
    ) -> Result<f64> {
        let offset = self.weighted_offset(raw_weights)?;
        let (px_theta, px) = Self::record_terms(x, cfg)?;
        let c = raw_weights.total();
        Ok(cfg.log_base.from_nats(c * (px_theta / px).ln() + offset))
    }

    fn weighted_offset(&self, w: &WeightVector) -> Result<f64> {
        if w.len() != self.len() {
            return Err(Error::DimensionMismatch {
                left: w.len(),
                right: self.len(),
            });
        }
        if w.as_slice().iter().any(|&v| v <= 0.0) {
            return Err(Error::NegativeWeight);
        }
        let mut acc = CompensatedSum::new();
        for ((&wz, &pz), &pz_theta) in w.as_slice().iter().zip(&self.prior).zip(&self.target) {
            acc.add(wz * (pz / pz_theta.max(f64::MIN_POSITIVE)).ln());
        }
        Ok(acc.value())
    }
}

fn require_normalized(cfg: &AttackConfig) -> Result<()> {
    if cfg.normalize_population {
        Ok(())
    } else {
        Err(Error::Config(
            "the decomposed InfoRMIA score requires normalize_population = true".into(),
        ))
    }
}

pub fn informia_score(
    x: &SequenceSignal,
    population: &[PopulationSignal],
    cfg: &AttackConfig,
) -> Result<InfoRmiaScoreParts> {
    require_normalized(cfg)?;
    InfoRmiaPopulation::prepare(population, cfg)?.score(x, cfg)
}

pub fn informia_score_direct(
    x: &SequenceSignal,
    population: &[PopulationSignal],
    cfg: &AttackConfig,
) -> Result<f64> {
    require_normalized(cfg)?;
    InfoRmiaPopulation::prepare(population, cfg)?.score_direct(x, cfg)
}

pub fn informia_score_unnormalized(
    x: &SequenceSignal,
    population: &[PopulationSignal],
    raw_weights: &WeightVector,
    cfg: &AttackConfig,
) -> Result<f64> {
    InfoRmiaPopulation::prepare(population, cfg)?.score_unnormalized(x, raw_weights, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::LogBase;
    use crate::data::Label;

    fn cfg(base: LogBase) -> AttackConfig {
        AttackConfig {
            log_base: base,
            ..Default::default()
        }
    }

    /// p(x|θ) = 0.8, p(x) = 0.2; p̂(z) = (0.75, 0.25); p̂(z|θ) = (0.5, 0.5).
    fn fixture() -> (SequenceSignal, Vec<PopulationSignal>) {
        let x = SequenceSignal::new("x", Label::Member, 0.8, vec![0.1, 0.3]);
        let z = vec![
            PopulationSignal::new("z1", 0.4, vec![0.6]),
            PopulationSignal::new("z2", 0.4, vec![0.2]),
        ];
        (x, z)
    }

    // 2 + 0.75·log2(1.5) + 0.25·log2(0.5), evaluated term by term.
    const FIXTURE_BITS: f64 = 2.188_721_875_540_867;

    #[test]
    fn decomposed_fixture() {
        let (x, z) = fixture();
        let parts = informia_score(&x, &z, &cfg(LogBase::Two)).unwrap();
        assert!((parts.gain_term - 2.0).abs() < 1e-12);
        assert!((parts.kl_term - 0.188_721_875_540_867).abs() < 1e-12);
        assert!((parts.total - FIXTURE_BITS).abs() < 1e-12);
        assert_eq!(parts.total, parts.gain_term + parts.kl_term);

        let nats = informia_score(&x, &z, &cfg(LogBase::E)).unwrap();
        assert!((nats.total - 1.517_106_397_061_027_5).abs() < 1e-12);
    }

    #[test]
    fn direct_fixture() {
        let (x, z) = fixture();
        let direct = informia_score_direct(&x, &z, &cfg(LogBase::Two)).unwrap();
        assert!((direct - FIXTURE_BITS).abs() < 1e-12);
    }

    #[test]
    fn no_information_scores_zero() {
        let x = SequenceSignal::new("x", Label::Unknown, 0.3, vec![0.3]);
        let z = vec![
            PopulationSignal::new("z1", 0.2, vec![0.2]),
            PopulationSignal::new("z2", 0.5, vec![0.5]),
        ];
        let parts = informia_score(&x, &z, &cfg(LogBase::Two)).unwrap();
        assert_eq!(parts.total, 0.0);
    }

    #[test]
    fn single_point_population_reduces_to_gain() {
        let x = SequenceSignal::new("x", Label::Unknown, 0.6, vec![0.2]);
        let z = vec![PopulationSignal::new("z", 0.1, vec![0.7])];
        let c = cfg(LogBase::Two);
        let direct = informia_score_direct(&x, &z, &c).unwrap();
        assert!((direct - (3f64).log2()).abs() < 1e-12);
        assert_eq!(informia_score(&x, &z, &c).unwrap().kl_term, 0.0);
    }

    #[test]
    fn unnormalized_scales_linearly_and_matches_when_normalized() {
        let (x, z) = fixture();
        let c = cfg(LogBase::Two);
        let w = WeightVector::new(vec![0.6, 0.2]).unwrap();
        let w7 = WeightVector::new(vec![4.2, 1.4]).unwrap();
        let s = informia_score_unnormalized(&x, &z, &w, &c).unwrap();
        let s7 = informia_score_unnormalized(&x, &z, &w7, &c).unwrap();
        assert!((s7 - 7.0 * s).abs() < 1e-12 * s7.abs());

        let pop = InfoRmiaPopulation::prepare(&z, &c).unwrap();
        let wn = WeightVector::new(pop.prior().to_vec()).unwrap();
        let un = pop.score_unnormalized(&x, &wn, &c).unwrap();
        assert!((un - FIXTURE_BITS).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let (x, z) = fixture();
        let c = cfg(LogBase::Two);
        assert!(matches!(
            informia_score(&x, &[], &c),
            Err(Error::EmptyPopulation)
        ));
        let bad = WeightVector::new(vec![1.0, 0.0]).unwrap();
        assert!(informia_score_unnormalized(&x, &z, &bad, &c).is_err());
        let short = WeightVector::new(vec![1.0]).unwrap();
        assert!(informia_score_unnormalized(&x, &z, &short, &c).is_err());
        let off = AttackConfig {
            normalize_population: false,
            ..c
        };
        assert!(matches!(
            informia_score(&x, &z, &off),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn kl_term_is_shared_across_records() {
        let (_, z) = fixture();
        let c = cfg(LogBase::Two);
        let a = SequenceSignal::new("a", Label::Unknown, 0.9, vec![0.1]);
        let b = SequenceSignal::new("b", Label::Unknown, 0.05, vec![0.5, 0.6]);
        let pa = informia_score(&a, &z, &c).unwrap();
        let pb = informia_score(&b, &z, &c).unwrap();
        assert_eq!(pa.kl_term, pb.kl_term);
        assert_ne!(pa.gain_term, pb.gain_term);
    }
}
