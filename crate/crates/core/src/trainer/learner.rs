use crate::federation::RewardBuffer;
use crate::nn::{adam_update, clip_global_norm, NnError, OptimizerState, ParameterSet};

/// One agent's private learning state.
///
/// Parameters are only reachable through this value; the trainer hands each
/// learner its own gradients and only the federation barrier reads every
/// learner at once.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentLearner {
    id: usize,
    params: ParameterSet,
    target_params: ParameterSet,
    optimizer: OptimizerState,
    rewards: RewardBuffer,
}

impl AgentLearner {
    pub fn new(id: usize, params: ParameterSet, reward_buffer_size: usize) -> Self {
        Self {
            id,
            target_params: params.clone(),
            optimizer: OptimizerState::new(&params),
            rewards: RewardBuffer::new(reward_buffer_size),
            params,
        }
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut ParameterSet {
        &mut self.params
    }

    pub fn target_params(&self) -> &ParameterSet {
        &self.target_params
    }

    pub fn optimizer(&self) -> &OptimizerState {
        &self.optimizer
    }

    pub fn rewards(&self) -> &RewardBuffer {
        &self.rewards
    }

    pub fn record_reward(&mut self, r: f64) {
        self.rewards.record(r);
    }

    /// Optional clipping to `max_norm`, then one Adam step. Returns the
    /// gradient norm before clipping.
    pub fn apply_gradients(
        &mut self,
        mut grads: ParameterSet,
        lr: f64,
        max_norm: Option<f64>,
    ) -> Result<f64, NnError> {
        let norm = match max_norm {
            Some(m) => clip_global_norm(&mut grads, m),
            None => grads.global_norm(),
        };
        adam_update(&mut self.params, &grads, &mut self.optimizer, lr)?;
        Ok(norm)
    }

    /// Hard copy of the online parameters into the target network.
    pub fn sync_target(&mut self) {
        self.target_params.clone_from(&self.params);
    }
}
