//! Decentralized multi-agent Q-learning with value factorization (VDN, QMIX)
//! and periodic federated parameter sharing between agent networks.
//!
//! The crate is organized bottom-up:
//!
//! * [`nn`]: dense/recurrent layers with hand-written backpropagation, Adam,
//!   gradient clipping, orthogonal initialization and a text checkpoint format.
//! * [`factorization`]: VDN sum and QMIX monotonic mixer, TD targets and loss,
//!   action selection.
//! * [`federation`]: reward buffers, aggregation weights (uniform, reward-scaled),
//!   layer-wise aggregation with personalized layers, blended broadcast.
//! * [`envs`]: small deterministic cooperative environments with an exhaustive
//!   optimal-return oracle.
//! * [`trainer`]: rollouts, episodic replay, optimization, target networks,
//!   federation scheduling and evaluation.

pub mod envs;
pub mod episode;
pub mod factorization;
pub mod federation;
pub mod nn;
pub mod seed;
pub mod trainer;

pub use episode::EpisodeRecord;
