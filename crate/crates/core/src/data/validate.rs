use super::{SequenceSignal, TokenSignal};
use crate::error::{Error, Result};
use crate::prob_algebra::{kl_nats, CompensatedSum};

/// Stored derived fields must match recomputation within this bound.
pub const RECOMPUTE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TokenBlockReport {
    /// Positions that carried full distributions and were recomputed.
    pub positions_checked: usize,
    pub max_deviation: f64,
}

/// Mean and standard deviation of `ln p(v)` under `v ~ p`, in nats.
pub fn position_moments(dist: &[f64]) -> (f64, f64) {
    let mut mu = CompensatedSum::new();
    for &p in dist {
        if p > 0.0 {
            mu.add(p * p.ln());
        }
    }
    let mu = mu.value();
    let mut var = CompensatedSum::new();
    for &p in dist {
        if p > 0.0 {
            let d = p.ln() - mu;
            var.add(p * d * d);
        }
    }
    (mu, var.value().max(0.0).sqrt())
}

/// Element-wise mean of the reference next-token distributions.
pub fn reference_average(refs: &[Vec<f64>]) -> Vec<f64> {
    let Some(first) = refs.first() else {
        return Vec::new();
    };
    let n = refs.len() as f64;
    (0..first.len())
        .map(|v| {
            let mut acc = CompensatedSum::new();
            for r in refs {
                acc.add(r[v]);
            }
            acc.value() / n
        })
        .collect()
}

fn check(
    id: &str,
    position: usize,
    field: &'static str,
    stored: Option<f64>,
    fresh: f64,
    worst: &mut f64,
) -> Result<()> {
    if let Some(stored) = stored {
        let dev = (stored - fresh).abs();
        if dev > RECOMPUTE_TOL || dev.is_nan() {
            return Err(Error::TokenInconsistency {
                id: id.to_owned(),
                position,
                field,
                deviation: dev,
            });
        }
        *worst = worst.max(dev);
    }
    Ok(())
}

fn check_position(id: &str, position: usize, tok: &TokenSignal, worst: &mut f64) -> Result<bool> {
    let (Some(target), Some(refs)) = (&tok.full_dist_target, &tok.full_dist_refs) else {
        return Ok(false);
    };
    let (mu, sigma) = position_moments(target);
    check(id, position, "mu_target", tok.mu_target, mu, worst)?;
    check(id, position, "sigma_target", tok.sigma_target, sigma, worst)?;
    if !refs.is_empty() {
        let avg = reference_average(refs);
        check(
            id,
            position,
            "kl_refavg_target",
            tok.kl_refavg_target,
            kl_nats(&avg, target),
            worst,
        )?;
    }
    if let Some(gt) = tok.gt_token {
        let lp = target[gt].max(f64::MIN_POSITIVE).ln();
        check(
            id,
            position,
            "gt_logprob_target",
            Some(tok.gt_logprob_target),
            lp,
            worst,
        )?;
    }
    Ok(true)
}

/// Recomputes `mu_target`, `sigma_target` and `kl_refavg_target` from the full
/// distributions wherever they are present and compares with stored values.
pub fn validate_token_block(rec: &SequenceSignal) -> Result<TokenBlockReport> {
    let tokens = rec.tokens()?;
    let mut report = TokenBlockReport::default();
    for (i, tok) in tokens.iter().enumerate() {
        if check_position(&rec.id, i + 1, tok, &mut report.max_deviation)? {
            report.positions_checked += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Label;

    fn record(tok: TokenSignal) -> SequenceSignal {
        let mut rec = SequenceSignal::new("r", Label::Unknown, 0.5, vec![0.5]);
        rec.tokens = Some(vec![tok]);
        rec
    }

    fn full(target: &[f64], refs: &[&[f64]]) -> TokenSignal {
        let mut tok = TokenSignal::new(target[0].ln(), refs.iter().map(|r| r[0].ln()).collect());
        tok.full_dist_target = Some(target.to_vec());
        tok.full_dist_refs = Some(refs.iter().map(|r| r.to_vec()).collect());
        tok
    }

    #[test]
    fn uniform_moments_pass() {
        let u = [0.25; 4];
        let mut tok = full(&u, &[&u]);
        tok.mu_target = Some(-(4f64).ln());
        tok.sigma_target = Some(0.0);
        tok.kl_refavg_target = Some(0.0);
        let report = validate_token_block(&record(tok)).unwrap();
        assert_eq!(report.positions_checked, 1);
        assert!(report.max_deviation < 1e-12);
    }

    #[test]
    fn identical_refs_have_zero_kl() {
        let d = [0.6, 0.3, 0.1];
        let mut tok = full(&d, &[&d, &d]);
        tok.kl_refavg_target = Some(0.0);
        validate_token_block(&record(tok)).unwrap();
    }

    #[test]
    fn three_token_kl_fixture() {
        // Σ p̄·ln(p̄/p) over (0.5,0.3,0.2) vs (0.7,0.2,0.1), summed by hand.
        let mut tok = full(&[0.7, 0.2, 0.1], &[&[0.4, 0.4, 0.2], &[0.6, 0.2, 0.2]]);
        tok.kl_refavg_target = Some(0.092_032_850);
        let report = validate_token_block(&record(tok)).unwrap();
        assert!(report.max_deviation < 1e-6, "{report:?}");
    }

    #[test]
    fn inconsistent_kl_names_position() {
        let mut tok = full(&[0.7, 0.2, 0.1], &[&[0.5, 0.3, 0.2]]);
        tok.kl_refavg_target = Some(0.2);
        let err = validate_token_block(&record(tok)).unwrap_err();
        assert!(matches!(
            err,
            Error::TokenInconsistency {
                position: 1,
                field: "kl_refavg_target",
                ..
            }
        ));
    }

    #[test]
    fn missing_tokens_is_an_error() {
        let rec = SequenceSignal::new("r", Label::Unknown, 0.5, vec![0.5]);
        assert!(matches!(
            validate_token_block(&rec),
            Err(Error::MissingTokens(_))
        ));
    }

    #[test]
    fn positions_without_full_dist_are_skipped() {
        let tok = TokenSignal::new(-0.3, vec![-0.4]);
        let report = validate_token_block(&record(tok)).unwrap();
        assert_eq!(report.positions_checked, 0);
    }
}
