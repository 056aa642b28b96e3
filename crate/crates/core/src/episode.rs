//! Recorded trajectories.

/// One episode of joint experience.
///
/// Observations, states and availability masks have one more entry than the
/// transitions: index `t` is the situation before action `t`, and the final
/// entry is the situation after the last transition (used for bootstrapping
/// when the episode was cut by the step limit).
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    /// `[t][agent]` local observation vectors, `len() + 1` entries.
    pub observations: Vec<Vec<Vec<f64>>>,
    /// `[t]` global state vectors, `len() + 1` entries.
    pub states: Vec<Vec<f64>>,
    /// `[t][agent]` action availability, `len() + 1` entries.
    pub avail_actions: Vec<Vec<Vec<bool>>>,
    /// `[t][agent]` chosen actions.
    pub actions: Vec<Vec<usize>>,
    /// `[t][agent]` per-agent rewards.
    pub agent_rewards: Vec<Vec<f64>>,
    /// `[t]` team reward, the sum of the per-agent rewards.
    pub team_rewards: Vec<f64>,
    /// The last transition reached a terminal state (as opposed to the step limit).
    pub terminated: bool,
}

impl EpisodeRecord {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn n_agents(&self) -> usize {
        self.observations.first().map_or(0, Vec::len)
    }

    pub fn team_return(&self) -> f64 {
        self.team_rewards.iter().sum()
    }

    /// Whether transition `t` ended in a terminal state.
    pub fn is_terminal_step(&self, t: usize) -> bool {
        self.terminated && t + 1 == self.len()
    }

    /// The slice of the episode that belongs to one agent.
    pub fn agent_view(&self, agent: usize) -> AgentTrajectory<'_> {
        AgentTrajectory {
            episode: self,
            agent,
        }
    }
}

/// One agent's own observations, actions and rewards. This is all an agent
/// learner gets to see of a joint episode.
#[derive(Debug, Clone, Copy)]
pub struct AgentTrajectory<'a> {
    episode: &'a EpisodeRecord,
    agent: usize,
}

impl<'a> AgentTrajectory<'a> {
    pub fn len(&self) -> usize {
        self.episode.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episode.is_empty()
    }

    /// All `len() + 1` observations.
    pub fn observations(&self) -> Vec<&'a [f64]> {
        self.episode
            .observations
            .iter()
            .map(|o| o[self.agent].as_slice())
            .collect()
    }

    pub fn action(&self, t: usize) -> usize {
        self.episode.actions[t][self.agent]
    }

    pub fn avail(&self, t: usize) -> &'a [bool] {
        &self.episode.avail_actions[t][self.agent]
    }

    pub fn reward(&self, t: usize) -> f64 {
        self.episode.agent_rewards[t][self.agent]
    }
}
