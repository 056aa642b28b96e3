//! Periodic parameter sharing between agent networks.
//!
//! Three strategies are supported on top of plain independent learning:
//!
//! * `apps`: uniform-weight averaging of every layer.
//! * `rspps`: weights proportional to each agent's recent accumulated reward.
//! * `pppps`: reward-scaled averaging of the upper layers only; the lowest
//!   `personalized_layers` layers stay local.
//!
//! The API only ever takes parameter sets and reward scalars.

mod aggregate;
mod reward_buffer;

pub use aggregate::{
    aggregate, aggregation_weights, apply_global, should_aggregate, AggregationMode,
    AggregationPolicy, GlobalModel, RoundAudit,
};
pub use reward_buffer::RewardBuffer;

use thiserror::Error;

use crate::nn::NnError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FederationError {
    #[error("no agents to aggregate")]
    NoAgents,
    #[error("expected {expected} weights, got {actual}")]
    WeightCount { expected: usize, actual: usize },
    #[error("shape mismatch across agents in layer {layer_id}")]
    LayerMismatch { layer_id: usize },
    #[error("invalid aggregation policy: {0}")]
    InvalidPolicy(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}
