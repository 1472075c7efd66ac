//! Numerical kernels shared by the attacks: weight normalization,
//! compensated summation, log-domain means and KL divergence.

use crate::config::LogBase;
use crate::error::{Error, Result};

/// Probabilities are clamped to `[PROB_FLOOR, 1]` before any logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

const NORMALIZED_TOL: f64 = 1e-9;

/// Non-negative weights, optionally known to sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    weights: Vec<f64>,
    normalized: bool,
}

impl WeightVector {
    /// Raw (unnormalized) weights. Every entry must be finite and `>= 0`.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::NegativeWeight);
        }
        Ok(WeightVector {
            weights,
            normalized: false,
        })
    }

    /// Weights that are already a probability distribution.
    pub fn distribution(weights: Vec<f64>) -> Result<Self> {
        let mut w = Self::new(weights)?;
        let sum = compensated_sum(w.weights.iter().copied());
        if (sum - 1.0).abs() > NORMALIZED_TOL {
            return Err(Error::Unnormalized(sum));
        }
        w.normalized = true;
        Ok(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn total(&self) -> f64 {
        compensated_sum(self.weights.iter().copied())
    }
}

/// Neumaier's variant of Kahan summation. Accumulates in input order.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl Extend<f64> for CompensatedSum {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for x in iter {
            self.add(x);
        }
    }
}

pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = CompensatedSum::new();
    acc.extend(values);
    acc.value()
}

/// Arithmetic mean with compensated accumulation. Errors on empty input.
pub fn mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("mean of an empty list"));
    }
    Ok(compensated_sum(values.iter().copied()) / values.len() as f64)
}

/// Rescales `w` so it sums to one.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn normalize(w: &WeightVector) -> Result<WeightVector> {
    let total = w.total();
    if !(total > 0.0) {
        return Err(Error::DegenerateWeights);
    }
    Ok(WeightVector {
        weights: w.weights.iter().map(|x| x / total).collect(),
        normalized: true,
    })
}

/// `D_KL(p || q)` in the requested base. Terms with `p = 0` contribute zero;
/// `q` is floored at [`PROB_FLOOR`].
pub fn kl_divergence(p: &WeightVector, q: &WeightVector, base: LogBase) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    for w in [p, q] {
        if !w.normalized {
            return Err(Error::Unnormalized(w.total()));
        }
    }
    Ok(base.from_nats(kl_nats(p.as_slice(), q.as_slice())))
}

/// Unchecked KL kernel in nats. Callers guarantee equal lengths.
pub(crate) fn kl_nats(p: &[f64], q: &[f64]) -> f64 {
    let mut acc = CompensatedSum::new();
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            acc.add(pi * (pi / qi.max(PROB_FLOOR)).ln());
        }
    }
    // Rounding can leave a tiny negative total for near-identical inputs.
    acc.value().max(0.0)
}

/// `Σ ŵ·v` with `ŵ` the normalized weights.
pub fn weighted_mean(values: &[f64], w: &WeightVector) -> Result<f64> {
    if values.len() != w.len() {
        return Err(Error::DimensionMismatch {
            left: values.len(),
            right: w.len(),
        });
    }
    let w = if w.is_normalized() {
        w.clone()
    } else {
        normalize(w)?
    };
    Ok(compensated_sum(
        values.iter().zip(w.as_slice()).map(|(v, wi)| v * wi),
    ))
}

/// `ln(mean(exp(xs)))` computed stably.
pub fn log_mean_exp(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::Empty("log-mean-exp of an empty list"));
    }
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let s = compensated_sum(xs.iter().map(|x| (x - max).exp()));
    Ok(max + s.ln() - (xs.len() as f64).ln())
}

/// Clamps a probability into `[floor, 1]`.
#[inline]
pub fn floor_prob(p: f64, floor: f64) -> f64 {
    p.clamp(floor, 1.0)
}
