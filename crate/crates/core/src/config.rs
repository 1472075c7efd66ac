//! Attack hyperparameters shared by every scoring routine.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Logarithm base used for emitted scores.
///
/// On disk every log-probability is a natural log; scoring divides by
/// `ln(base)`. Base changes are monotone and never reorder records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum LogBase {
    #[default]
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "e")]
    E,
}

impl LogBase {
    pub fn ln(self) -> f64 {
        match self {
            LogBase::Two => std::f64::consts::LN_2,
            LogBase::E => 1.0,
        }
    }

    /// Converts a natural-log quantity into this base.
    #[inline]
    pub fn from_nats(self, nats: f64) -> f64 {
        match self {
            LogBase::Two => nats / std::f64::consts::LN_2,
            LogBase::E => nats,
        }
    }

    #[inline]
    pub fn log(self, x: f64) -> f64 {
        self.from_nats(x.ln())
    }
}

impl std::str::FromStr for LogBase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "2" | "bits" => Ok(LogBase::Two),
            "e" | "nat" | "nats" => Ok(LogBase::E),
            other => Err(Error::Config(format!(
                "log base must be 2 or e, got '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    /// RMIA domination threshold, `>= 1`.
    pub gamma: f64,
    /// Offline prior interpolation in `[0, 1]`; `1` uses the plain reference mean.
    pub a: f64,
    /// Percentage used by Min-K%, Min-K%++ and min-k aggregation, in `(0, 100]`.
    pub k_percent: f64,
    pub log_base: LogBase,
    pub normalize_population: bool,
    pub epsilon_floor: f64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            gamma: 2.0,
            a: 1.0,
            k_percent: 20.0,
            log_base: LogBase::Two,
            normalize_population: true,
            epsilon_floor: 1e-12,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 1.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!(
                "gamma must be >= 1, got {}",
                self.gamma
            )));
        }
        if !(0.0..=1.0).contains(&self.a) {
            return Err(Error::Config(format!(
                "a must lie in [0, 1], got {}",
                self.a
            )));
        }
        check_k_percent(self.k_percent)?;
        if !(self.epsilon_floor > 0.0 && self.epsilon_floor < 1.0) {
            return Err(Error::Config(format!(
                "epsilon_floor must lie in (0, 1), got {}",
                self.epsilon_floor
            )));
        }
        Ok(())
    }
}

pub(crate) fn check_k_percent(k: f64) -> Result<()> {
    if k > 0.0 && k <= 100.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "k_percent must lie in (0, 100], got {k}"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        AttackConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_out_of_range_fields() {
        let bad = [
            AttackConfig {
                gamma: 0.5,
                ..Default::default()
            },
            AttackConfig {
                a: 1.5,
                ..Default::default()
            },
            AttackConfig {
                k_percent: 0.0,
                ..Default::default()
            },
            AttackConfig {
                k_percent: 101.0,
                ..Default::default()
            },
            AttackConfig {
                epsilon_floor: 0.0,
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn base_parsing_and_conversion() {
        assert_eq!("2".parse::<LogBase>().unwrap(), LogBase::Two);
        assert_eq!("e".parse::<LogBase>().unwrap(), LogBase::E);
        assert!("10".parse::<LogBase>().is_err());
        assert!((LogBase::Two.log(8.0) - 3.0).abs() < 1e-12);
        assert_eq!(LogBase::E.from_nats(1.25), 1.25);
    }

    #[test]
    fn config_json_uses_partial_defaults() {
        let cfg: AttackConfig = serde_json::from_str(r#"{"gamma": 3.0, "log_base": "e"}"#).unwrap();
        assert_eq!(cfg.gamma, 3.0);
        assert_eq!(cfg.log_base, LogBase::E);
        assert_eq!(cfg.k_percent, 20.0);
    }
}
