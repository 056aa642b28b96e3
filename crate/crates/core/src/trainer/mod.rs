//! Training orchestration: rollouts, episodic replay, TD optimization of every
//! agent network and the mixer, target networks, federation rounds and
//! periodic greedy evaluation.
//!
//! [`run`] drives a whole experiment and writes a run directory containing
//! `manifest.txt`, `metrics.csv`, `aggregation.log` and one checkpoint per
//! agent plus `mixer.ckpt`.

mod config;
mod learner;
mod output;
mod replay;
mod run;

pub use config::{Algorithm, ConfigError, TrainConfig};
pub use learner::AgentLearner;
pub use output::{
    agent_checkpoint_name, MetricsRow, RunManifest, AUDIT_FILE, MANIFEST_FILE, METRICS_FILE,
    METRICS_HEADER, MIXER_CHECKPOINT,
};
pub use replay::ReplayBuffer;
pub use run::{agent_architecture, artifact_names, run, EvalResult, RunSummary, Trainer};

use thiserror::Error;

use crate::envs::EnvError;
use crate::factorization::FactorizationError;
use crate::federation::FederationError;
use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("environment: {0}")]
    Env(#[from] EnvError),
    #[error("factorization: {0}")]
    Factorization(#[from] FactorizationError),
    #[error("federation: {0}")]
    Federation(#[from] FederationError),
    #[error("network: {0}")]
    Nn(#[from] NnError),
    #[error("non-finite TD loss at train step {train_step} (env step {env_step})")]
    NonFiniteLoss { train_step: u64, env_step: u64 },
    #[error("{0}")]
    Invalid(String),
    #[error("i/o: {0}")]
    Io(String),
}
