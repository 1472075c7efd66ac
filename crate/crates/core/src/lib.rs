//! Membership-inference scoring and token-level privacy auditing.
//!
//! The engine consumes pre-extracted probability signals (see [`data`]) and
//! produces membership scores, oriented so that higher means more
//! member-like:
//!
//! * [`rmia`]: offline RMIA, a pairwise likelihood-ratio domination count.
//! * [`informia`]: sequence-level InfoRMIA, the expected log-posterior
//!   advantage of a record over a population.
//! * [`token`]: InfoRMIA per next-token prediction, with mean and min-k
//!   aggregation to sequence scores.
//! * [`baselines`]: LOSS, Zlib, Min-K%, Min-K%++ and Ref.
//!
//! Scores are evaluated with [`evaluation`] (ROC, AUC, TPR at low FPR),
//! analysed with [`audit`] and rendered with [`report`].

pub mod audit;
pub mod baselines;
pub mod config;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod informia;
pub mod prob_algebra;
pub mod report;
pub mod rmia;
pub mod scores;
pub mod token;

pub use config::{AttackConfig, LogBase};
pub use data::{Dataset, Label, PopulationSignal, SequenceSignal, TokenSignal};
pub use error::{Error, Result};
pub use scores::{score_dataset, Attack, ScoreFormat, ScoreSet};
pub use token::Aggregation;
