use super::{check_joint_action, EnvError, EnvSpec, Environment, StepResult};

const N_AGENTS: usize = 2;
const N_ACTIONS: usize = 2;
const BRANCH_A_PAYOFF: [[f64; 2]; 2] = [[7.0, 7.0], [7.0, 7.0]];
const BRANCH_B_PAYOFF: [[f64; 2]; 2] = [[0.0, 1.0], [1.0, 8.0]];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Situation {
    Start,
    BranchA,
    BranchB,
    Over,
}

impl Situation {
    fn one_hot(self) -> [f64; 3] {
        match self {
            Situation::Start => [1.0, 0.0, 0.0],
            Situation::BranchA => [0.0, 1.0, 0.0],
            Situation::BranchB => [0.0, 0.0, 1.0],
            Situation::Over => [0.0; 3],
        }
    }
}

/// Two agents, two actions, two steps.
///
/// In the first step agent 0 picks branch A (action 0) or B (action 1) and
/// agent 1 is ignored. In the second step the joint action is paid out from
/// the branch's table: A pays 7 for everything, B pays `[[0, 1], [1, 8]]`
/// indexed by `(agent 0, agent 1)`. Each agent receives half the team reward.
///
/// Observations are the situation one-hot (start, A, B) followed by the agent
/// id one-hot. The state is the situation one-hot.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStepCoordination {
    situation: Situation,
}

impl Default for TwoStepCoordination {
    fn default() -> Self {
        Self::new()
    }
}

impl TwoStepCoordination {
    pub fn new() -> Self {
        Self {
            situation: Situation::Over,
        }
    }

    fn result(&self, team_reward: f64) -> StepResult {
        let done = self.situation == Situation::Over;
        let state = self.situation.one_hot().to_vec();
        let observations = (0..N_AGENTS)
            .map(|agent| {
                let mut obs = state.clone();
                obs.extend((0..N_AGENTS).map(|i| if i == agent { 1.0 } else { 0.0 }));
                obs
            })
            .collect();
        StepResult {
            observations,
            agent_rewards: vec![team_reward / 2.0; N_AGENTS],
            team_reward,
            state,
            done,
            terminated: done,
            avail_actions: vec![vec![true; N_ACTIONS]; N_AGENTS],
        }
    }
}

impl Environment for TwoStepCoordination {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            n_agents: N_AGENTS,
            obs_dim: 3 + N_AGENTS,
            state_dim: 3,
            n_actions: N_ACTIONS,
            episode_limit: 2,
        }
    }

    fn reset(&mut self, _seed: u64) -> StepResult {
        self.situation = Situation::Start;
        self.result(0.0)
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult, EnvError> {
        check_joint_action(self, actions)?;
        let (next, reward) = match self.situation {
            Situation::Start if actions[0] == 0 => (Situation::BranchA, 0.0),
            Situation::Start => (Situation::BranchB, 0.0),
            Situation::BranchA => (Situation::Over, BRANCH_A_PAYOFF[actions[0]][actions[1]]),
            Situation::BranchB => (Situation::Over, BRANCH_B_PAYOFF[actions[0]][actions[1]]),
            Situation::Over => unreachable!("checked above"),
        };
        self.situation = next;
        Ok(self.result(reward))
    }

    fn available_actions(&self, agent: usize) -> Result<Vec<bool>, EnvError> {
        if agent >= N_AGENTS {
            return Err(EnvError::InvalidAgent(agent));
        }
        if self.is_done() {
            return Err(EnvError::EpisodeDone);
        }
        Ok(vec![true; N_ACTIONS])
    }

    fn is_done(&self) -> bool {
        self.situation == Situation::Over
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn play(first: [usize; 2], second: [usize; 2]) -> (f64, StepResult) {
        let mut env = TwoStepCoordination::new();
        env.reset(0);
        let mid = env.step(&first).unwrap();
        assert!(!mid.done);
        assert_eq!(mid.team_reward, 0.0);
        let last = env.step(&second).unwrap();
        (last.team_reward, last)
    }

    #[test]
    fn reset_puts_both_agents_at_start() {
        let mut env = TwoStepCoordination::new();
        let r = env.reset(3);
        assert_eq!(r.observations[0], vec![1.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(r.observations[1], vec![1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(r, env.reset(99));
    }

    #[test]
    fn payoffs() {
        for a in 0..2 {
            for b in 0..2 {
                for ignored in 0..2 {
                    assert_eq!(play([0, ignored], [a, b]).0, 7.0);
                }
            }
        }
        let (r, last) = play([1, 0], [1, 1]);
        assert_eq!(r, 8.0);
        assert!(last.done && last.terminated);
        assert_eq!(last.agent_rewards, vec![4.0, 4.0]);
        assert_eq!(play([1, 1], [0, 0]).0, 0.0);
        assert_eq!(play([1, 1], [0, 1]).0, 1.0);
        assert_eq!(play([1, 1], [1, 0]).0, 1.0);
    }

    #[test]
    fn agent_one_is_ignored_in_first_step() {
        let mut a = TwoStepCoordination::new();
        let mut b = TwoStepCoordination::new();
        a.reset(0);
        b.reset(0);
        assert_eq!(a.step(&[1, 0]).unwrap(), b.step(&[1, 1]).unwrap());
    }

    #[test]
    fn errors() {
        let mut env = TwoStepCoordination::new();
        assert_eq!(env.step(&[0, 0]), Err(EnvError::EpisodeDone));
        env.reset(0);
        assert_eq!(env.available_actions(0).unwrap(), vec![true, true]);
        assert_eq!(env.available_actions(2), Err(EnvError::InvalidAgent(2)));
        assert_eq!(
            env.step(&[0]),
            Err(EnvError::ActionCount {
                expected: 2,
                actual: 1
            })
        );
        assert_eq!(
            env.step(&[0, 2]),
            Err(EnvError::UnavailableAction {
                agent: 1,
                action: 2
            })
        );
        env.step(&[0, 0]).unwrap();
        env.step(&[0, 0]).unwrap();
        assert_eq!(env.available_actions(0), Err(EnvError::EpisodeDone));
        assert_eq!(env.step(&[0, 0]), Err(EnvError::EpisodeDone));
    }
}
