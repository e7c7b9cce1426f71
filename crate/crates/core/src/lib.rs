//! Hyperparameter optimisation toolkit: a TPE sampler for iterative tuning, an
//! LLM-backed one-shot recommender, a persistent trial ledger, and RMSE /
//! Student-t interval reporting over recorded accuracies.

pub mod finetune;
pub mod ledger;
pub mod llmclient;
pub mod prompt;
pub mod runner;
pub mod space;
pub mod special;
pub mod stats;
pub mod tpe;

pub use ledger::{GroupKey, Ledger, LedgerError, Source, Task, TrialRecord};
pub use llmclient::{EndpointConfig, Recommendation};
pub use prompt::{PromptTemplate, RelevanceClass};
pub use runner::{Budget, Objective, ObjectiveSpec, RunTarget};
pub use space::{paper_search_space, HyperparameterSet, SearchSpace};
pub use stats::{ReportRow, StatsError};
pub use tpe::{TpeConfig, TpeError};
