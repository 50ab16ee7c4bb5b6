//! Evaluation protocols: few-shot trials, significance, retrieval.

pub mod oneshot;
pub mod retrieval;
pub mod stats;

pub use oneshot::{one_shot_trial, run_trials, ClassPool, EvalReport, TrialConfig, TrialResult};
pub use retrieval::{retrieval_eval, Query, RetrievalReport};
pub use stats::{pearson_rho, r_squared, wilcoxon_rank_sum};
