//! Offline RMIA: the fraction of population points whose likelihood ratio
//! the target record dominates by at least a factor `gamma`.

use crate::config::AttackConfig;
use crate::data::{PopulationSignal, SequenceSignal};
use crate::error::{Error, Result};
use crate::prob_algebra::{floor_prob, mean};

/// Offline prior `p(x) ≈ ½((1+a)·mean(p_refs) + (1−a))`.
///
/// With `a = 1` this is the plain reference mean. Smaller `a` pulls the
/// estimate towards one, compensating for reference models that never saw
/// the record.
pub fn estimate_prior(p_refs: &[f64], cfg: &AttackConfig) -> Result<f64> {
    if p_refs.is_empty() {
        return Err(Error::Empty("reference probabilities"));
    }
    let out = mean(p_refs)?;
    let prior = 0.5 * ((1.0 + cfg.a) * out + (1.0 - cfg.a));
    Ok(floor_prob(prior, cfg.epsilon_floor))
}

/// `p(·|θ) / p(·)` for one record.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LikelihoodRatio(f64);

impl LikelihoodRatio {
    pub fn new(p_target: f64, p_refs: &[f64], cfg: &AttackConfig) -> Result<Self> {
        let prior = estimate_prior(p_refs, cfg)?;
        Ok(LikelihoodRatio(
            floor_prob(p_target, cfg.epsilon_floor) / prior,
        ))
    }

    pub fn from_value(lr: f64) -> Self {
        debug_assert!(lr.is_finite() && lr > 0.0);
        LikelihoodRatio(lr)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Population likelihood ratios, computed once and shared by every scored record.
#[derive(Debug, Clone)]
pub struct RmiaPopulation {
    ratios: Vec<LikelihoodRatio>,
    gamma: f64,
}

impl RmiaPopulation {
    pub fn prepare(population: &[PopulationSignal], cfg: &AttackConfig) -> Result<Self> {
        if population.is_empty() {
            return Err(Error::EmptyPopulation);
        }
        let ratios = population
            .iter()
            .map(|z| {
                LikelihoodRatio::new(z.p_target, &z.p_refs, cfg).map_err(|e| Error::InvalidRecord {
                    id: z.id.clone(),
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_ratios(ratios, cfg.gamma))
    }

    pub fn from_ratios(ratios: Vec<LikelihoodRatio>, gamma: f64) -> Self {
        RmiaPopulation { ratios, gamma }
    }

    pub fn len(&self) -> usize {
        self.ratios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratios.is_empty()
    }

    /// `(1/|Z|)·Σ_z 1[LR(x)/LR(z) >= gamma]`. The comparison is inclusive.
    pub fn score_ratio(&self, lr_x: LikelihoodRatio) -> f64 {
        let dominated = self
            .ratios
            .iter()
            .filter(|lr_z| lr_x.0 / lr_z.0 >= self.gamma)
            .count();
        dominated as f64 / self.ratios.len() as f64
    }

    pub fn score(&self, x: &SequenceSignal, cfg: &AttackConfig) -> Result<f64> {
        let lr =
            LikelihoodRatio::new(x.p_target, &x.p_refs, cfg).map_err(|e| Error::InvalidRecord {
                id: x.id.clone(),
                message: e.to_string(),
            })?;
        Ok(self.score_ratio(lr))
    }
}

pub fn rmia_score(
    x: &SequenceSignal,
    population: &[PopulationSignal],
    cfg: &AttackConfig,
) -> Result<f64> {
    RmiaPopulation::prepare(population, cfg)?.score(x, cfg)
}
