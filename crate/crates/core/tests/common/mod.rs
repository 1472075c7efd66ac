//! Seeded generators and brute-force oracles shared by the integration tests.
//! Nothing here calls into the scoring code paths under test.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use leakscope::data::{Dataset, PopulationSignal, SequenceSignal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard normal via Box–Muller on raw ChaCha output, so the stream does
/// not depend on any distribution crate's sampling algorithm.
pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1 = ((rng.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
    let u2 = ((rng.next_u64() >> 11) as f64) / (1u64 << 53) as f64;
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

use rand::RngCore;

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Random point on the probability simplex, strictly positive.
pub fn simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n)
        .map(|_| -(rng.gen::<f64>().max(1e-12)).ln() * rng.gen_range(0.2..2.0))
        .collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|x| (x / s).max(1e-300)).collect()
}

/// Mann–Whitney pair counting, ties one half.
pub fn pair_count_auc(members: &[f64], nonmembers: &[f64]) -> f64 {
    let mut wins = 0.0f64;
    for &m in members {
        for &n in nonmembers {
            wins += if m > n {
                1.0
            } else if m == n {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / (members.len() as f64 * nonmembers.len() as f64)
}

/// TPR at the largest FPR <= target by enumerating every candidate threshold.
pub fn exhaustive_tpr(members: &[f64], nonmembers: &[f64], fpr_target: f64) -> f64 {
    let mut thresholds: Vec<f64> = members.iter().chain(nonmembers).copied().collect();
    thresholds.push(f64::INFINITY);
    let mut best = 0.0f64;
    for &t in &thresholds {
        let fp = nonmembers.iter().filter(|&&s| s >= t).count();
        let tp = members.iter().filter(|&&s| s >= t).count();
        if fp as f64 / nonmembers.len() as f64 <= fpr_target {
            best = best.max(tp as f64 / members.len() as f64);
        }
    }
    best
}

/// Gaussian membership game: each record has latent difficulty `b ~ N(0,1)`;
/// the logit of each reference model's probability is `b + N(0, 0.5²)`, the
/// target's is the same plus `+0.5` (half a standard deviation) for members.
pub struct GaussianGame {
    pub eval: Vec<SequenceSignal>,
    pub population: Vec<PopulationSignal>,
}

pub const GAME_REFS: usize = 4;

fn game_record(rng: &mut ChaCha8Rng, member: bool) -> (f64, Vec<f64>) {
    let b = normal(rng);
    let refs = (0..GAME_REFS)
        .map(|_| sigmoid(b + 0.5 * normal(rng)))
        .collect();
    let shift = if member { 0.5 } else { 0.0 };
    let target = sigmoid(b + 0.5 * normal(rng) + shift);
    (target, refs)
}

pub fn gaussian_game(seed: u64, n_eval: usize, n_pop: usize) -> GaussianGame {
    use leakscope::data::Label;
    let mut rng = rng(seed);
    let eval = (0..n_eval)
        .map(|i| {
            let member = i % 2 == 0;
            let (t, r) = game_record(&mut rng, member);
            let label = if member {
                Label::Member
            } else {
                Label::Nonmember
            };
            SequenceSignal::new(format!("x{i:05}"), label, t, r)
        })
        .collect();
    let population = (0..n_pop)
        .map(|i| {
            let (t, r) = game_record(&mut rng, false);
            PopulationSignal::new(format!("z{i:05}"), t, r)
        })
        .collect();
    GaussianGame { eval, population }
}

pub fn fixture_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn tiny_eval() -> Dataset<SequenceSignal> {
    Dataset::load(fixture_path("tiny_eval.jsonl"), 1e-12).expect("tiny_eval fixture")
}

pub fn tiny_population() -> Dataset<PopulationSignal> {
    Dataset::load(fixture_path("tiny_population.jsonl"), 1e-12).expect("tiny_population fixture")
}
