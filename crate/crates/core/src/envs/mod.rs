//! Small deterministic cooperative environments with exact optima.
//!
//! [`TwoStepCoordination`] is a two-stage matrix game whose optimum needs
//! coordinated risk. [`HeterogeneousHarvest`] is a grid where every agent
//! collects items of its own type, so per-agent rewards differ.

mod harvest;
mod oracle;
mod two_step;

pub use harvest::{HarvestConfig, HarvestLayout, HeterogeneousHarvest};
pub use oracle::{oracle_optimal_return, OracleSolution, ORACLE_SEQUENCE_LIMIT};
pub use two_step::TwoStepCoordination;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("expected {expected} actions, got {actual}")]
    ActionCount { expected: usize, actual: usize },
    #[error("agent {agent}: action {action} is not available")]
    UnavailableAction { agent: usize, action: usize },
    #[error("episode is over; call reset first")]
    EpisodeDone,
    #[error("no agent with id {0}")]
    InvalidAgent(usize),
    #[error("search space exceeds {limit} joint-action sequences")]
    SearchSpaceExceeded { limit: usize },
    #[error("unknown environment `{0}` (expected two_step, harvest or harvest_asym)")]
    UnknownEnv(String),
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnvSpec {
    pub n_agents: usize,
    pub obs_dim: usize,
    pub state_dim: usize,
    pub n_actions: usize,
    pub episode_limit: usize,
}

/// Everything an environment reports after `reset` or `step`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observations: Vec<Vec<f64>>,
    pub agent_rewards: Vec<f64>,
    /// Sum of `agent_rewards`.
    pub team_reward: f64,
    pub state: Vec<f64>,
    /// The episode is over, either terminated or cut at the step limit.
    pub done: bool,
    /// The episode reached a terminal state. Implies `done`.
    pub terminated: bool,
    pub avail_actions: Vec<Vec<bool>>,
}

pub trait Environment {
    fn spec(&self) -> EnvSpec;

    fn reset(&mut self, seed: u64) -> StepResult;

    fn step(&mut self, actions: &[usize]) -> Result<StepResult, EnvError>;

    /// Availability mask for one agent in the current situation.
    fn available_actions(&self, agent: usize) -> Result<Vec<bool>, EnvError>;

    fn is_done(&self) -> bool;
}

/// Shared argument checks for `step`.
pub(crate) fn check_joint_action(
    env: &impl Environment,
    actions: &[usize],
) -> Result<(), EnvError> {
    if env.is_done() {
        return Err(EnvError::EpisodeDone);
    }
    let n = env.spec().n_agents;
    if actions.len() != n {
        return Err(EnvError::ActionCount {
            expected: n,
            actual: actions.len(),
        });
    }
    for (agent, &action) in actions.iter().enumerate() {
        let mask = env.available_actions(agent)?;
        if !mask.get(action).copied().unwrap_or(false) {
            return Err(EnvError::UnavailableAction { agent, action });
        }
    }
    Ok(())
}

/// Environment selected by name.
#[derive(Debug, Clone, PartialEq)]
pub enum Env {
    TwoStep(TwoStepCoordination),
    Harvest(HeterogeneousHarvest),
}

impl Env {
    pub const NAMES: [&'static str; 3] = ["two_step", "harvest", "harvest_asym"];

    /// Builds `two_step`, `harvest` or `harvest_asym`. The harvest layouts are
    /// fixed by `layout_seed`.
    pub fn from_name(name: &str, layout_seed: u64) -> Result<Env, EnvError> {
        match name {
            "two_step" => Ok(Env::TwoStep(TwoStepCoordination::new())),
            "harvest" => Ok(Env::Harvest(HeterogeneousHarvest::new(
                HarvestConfig::symmetric(),
                Some(layout_seed),
            )?)),
            "harvest_asym" => Ok(Env::Harvest(HeterogeneousHarvest::new(
                HarvestConfig::asymmetric(),
                Some(layout_seed),
            )?)),
            other => Err(EnvError::UnknownEnv(other.to_string())),
        }
    }

    /// Exact best team return from the state `reset(seed)` produces.
    ///
    /// The two-step game is enumerated. Harvest layouts are generated only
    /// when every agent can collect all of its items within the step limit
    /// while treating foreign items as permanent walls, so their optimum is
    /// the total item count.
    pub fn optimal_return(&self, seed: u64) -> Result<f64, EnvError> {
        match self {
            Env::TwoStep(e) => Ok(oracle_optimal_return(e, seed)?.value),
            Env::Harvest(e) => Ok(e.certified_optimum(seed)? as f64),
        }
    }
}

impl Environment for Env {
    fn spec(&self) -> EnvSpec {
        match self {
            Env::TwoStep(e) => e.spec(),
            Env::Harvest(e) => e.spec(),
        }
    }

    fn reset(&mut self, seed: u64) -> StepResult {
        match self {
            Env::TwoStep(e) => e.reset(seed),
            Env::Harvest(e) => e.reset(seed),
        }
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult, EnvError> {
        match self {
            Env::TwoStep(e) => e.step(actions),
            Env::Harvest(e) => e.step(actions),
        }
    }

    fn available_actions(&self, agent: usize) -> Result<Vec<bool>, EnvError> {
        match self {
            Env::TwoStep(e) => e.available_actions(agent),
            Env::Harvest(e) => e.available_actions(agent),
        }
    }

    fn is_done(&self) -> bool {
        match self {
            Env::TwoStep(e) => e.is_done(),
            Env::Harvest(e) => e.is_done(),
        }
    }
}
