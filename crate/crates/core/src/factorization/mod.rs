//! Value factorization heads, TD learning targets and action selection.

mod action;
mod mixer;
mod td;

pub use action::{epsilon_greedy, greedy_action, EpsilonSchedule};
pub use mixer::{monotonicity_probe, qmix_total, vdn_total, Mixer, MixerNetwork, MixerTrace};
pub use td::{td_loss, td_loss_and_grads, td_targets, AgentNet, TdLossOutput};

use thiserror::Error;

use crate::nn::NnError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FactorizationError {
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("dimension mismatch for {what}: expected {expected}, got {actual}")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("no available action")]
    NoAvailableAction,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Nn(#[from] NnError),
}
