//! One-step TD targets and the mean squared TD loss over a batch of episodes.
//!
//! Each agent network only ever receives its own [`AgentTrajectory`]; the
//! mixer sees per-agent Q-values, global states and team rewards.

use std::collections::HashMap;

use super::{greedy_action, FactorizationError, Mixer};
use crate::episode::{AgentTrajectory, EpisodeRecord};
use crate::nn::{
    network_backward, network_forward, network_forward_traced, Architecture, ParameterSet,
    SequenceTrace,
};

/// An agent Q-network: architecture plus parameters.
#[derive(Debug, Clone, Copy)]
pub struct AgentNet<'a> {
    pub arch: &'a Architecture,
    pub params: &'a ParameterSet,
}

/// Episodes whose observation sequences are bit-identical share one forward
/// (and backward) pass. The result is exact: the network output depends only
/// on the observation sequence, and backpropagation is linear in the upstream
/// gradient.
struct Dedup {
    group_of: Vec<usize>,
    representatives: Vec<usize>,
}

fn sequence_key(obs: &[&[f64]]) -> Vec<u64> {
    let mut key = Vec::with_capacity(obs.len() * (obs.first().map_or(0, |o| o.len()) + 1));
    for o in obs {
        key.push(o.len() as u64);
        key.extend(o.iter().map(|v| v.to_bits()));
    }
    key
}

fn dedup(views: &[AgentTrajectory<'_>], steps: impl Fn(usize) -> usize) -> Dedup {
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut group_of = Vec::with_capacity(views.len());
    let mut representatives = Vec::new();
    for (e, v) in views.iter().enumerate() {
        let obs = v.observations();
        let key = sequence_key(&obs[..steps(e)]);
        let g = *index.entry(key).or_insert_with(|| {
            representatives.push(e);
            representatives.len() - 1
        });
        group_of.push(g);
    }
    Dedup {
        group_of,
        representatives,
    }
}

fn check_batch(
    batch: &[&EpisodeRecord],
    n_agents: usize,
    mixer: &Mixer,
) -> Result<(), FactorizationError> {
    if batch.is_empty() {
        return Err(FactorizationError::Empty("batch"));
    }
    if mixer.n_agents() != n_agents {
        return Err(FactorizationError::Dimension {
            what: "agent networks",
            expected: mixer.n_agents(),
            actual: n_agents,
        });
    }
    for ep in batch {
        if ep.is_empty() {
            return Err(FactorizationError::Empty("episode"));
        }
        if ep.n_agents() != n_agents {
            return Err(FactorizationError::Dimension {
                what: "episode agents",
                expected: n_agents,
                actual: ep.n_agents(),
            });
        }
    }
    Ok(())
}

/// `y_t = r_t + γ (1 − done_t) Q_tot^target(s_{t+1}, a*)`, where each agent's
/// `a*` is the target network's own greedy action among available actions.
///
/// Returns one vector of targets per episode.
pub fn td_targets(
    batch: &[&EpisodeRecord],
    target_agents: &[AgentNet<'_>],
    target_mixer: &Mixer,
    gamma: f64,
) -> Result<Vec<Vec<f64>>, FactorizationError> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(FactorizationError::InvalidParameter(format!(
            "gamma {gamma} outside [0, 1]"
        )));
    }
    check_batch(batch, target_agents.len(), target_mixer)?;

    // greedy target Q per [agent][episode][t], t in 0..=T
    let mut chosen: Vec<Vec<Vec<f64>>> = Vec::with_capacity(target_agents.len());
    for (i, net) in target_agents.iter().enumerate() {
        let views: Vec<AgentTrajectory<'_>> = batch.iter().map(|ep| ep.agent_view(i)).collect();
        let groups = dedup(&views, |e| batch[e].len() + 1);
        let mut per_group: Vec<Vec<Vec<f64>>> = Vec::with_capacity(groups.representatives.len());
        for &e in &groups.representatives {
            let obs = views[e].observations();
            let (q, _) = network_forward(&obs, net.arch, net.params, &net.arch.initial_hidden())?;
            per_group.push(q);
        }
        let mut agent_best = Vec::with_capacity(batch.len());
        for (e, ep) in batch.iter().enumerate() {
            let q = &per_group[groups.group_of[e]];
            let mut best = vec![0.0; ep.len() + 1];
            for t in 1..=ep.len() {
                if ep.is_terminal_step(t - 1) {
                    continue;
                }
                let a = greedy_action(&q[t], views[e].avail(t))?;
                best[t] = q[t][a];
            }
            agent_best.push(best);
        }
        chosen.push(agent_best);
    }

    let mut targets = Vec::with_capacity(batch.len());
    for (e, ep) in batch.iter().enumerate() {
        let mut y = Vec::with_capacity(ep.len());
        for t in 0..ep.len() {
            let r = ep.team_rewards[t];
            if ep.is_terminal_step(t) {
                y.push(r);
                continue;
            }
            let q_next: Vec<f64> = chosen.iter().map(|agent| agent[e][t + 1]).collect();
            let next = target_mixer.total(&q_next, &ep.states[t + 1])?;
            let v = r + gamma * next;
            if !v.is_finite() {
                return Err(FactorizationError::NonFinite("TD target"));
            }
            y.push(v);
        }
        targets.push(y);
    }
    Ok(targets)
}

/// Loss value and gradients for every agent network and the mixer.
#[derive(Debug, Clone)]
pub struct TdLossOutput {
    pub loss: f64,
    pub agent_grads: Vec<ParameterSet>,
    pub mixer_grads: Option<ParameterSet>,
}

/// Mean squared TD error over every step of the batch.
pub fn td_loss(
    batch: &[&EpisodeRecord],
    agents: &[AgentNet<'_>],
    mixer: &Mixer,
    targets: &[Vec<f64>],
) -> Result<f64, FactorizationError> {
    Ok(evaluate(batch, agents, mixer, targets, false)?.loss)
}

/// [`td_loss`] plus exact gradients, backpropagated through the mixer and
/// through time in each agent network. Targets are treated as constants.
pub fn td_loss_and_grads(
    batch: &[&EpisodeRecord],
    agents: &[AgentNet<'_>],
    mixer: &Mixer,
    targets: &[Vec<f64>],
) -> Result<TdLossOutput, FactorizationError> {
    evaluate(batch, agents, mixer, targets, true)
}

fn evaluate(
    batch: &[&EpisodeRecord],
    agents: &[AgentNet<'_>],
    mixer: &Mixer,
    targets: &[Vec<f64>],
    with_grads: bool,
) -> Result<TdLossOutput, FactorizationError> {
    check_batch(batch, agents.len(), mixer)?;
    if targets.len() != batch.len() {
        return Err(FactorizationError::Dimension {
            what: "targets",
            expected: batch.len(),
            actual: targets.len(),
        });
    }
    for (ep, y) in batch.iter().zip(targets) {
        if y.len() != ep.len() {
            return Err(FactorizationError::Dimension {
                what: "episode targets",
                expected: ep.len(),
                actual: y.len(),
            });
        }
    }
    let n_agents = agents.len();

    // forward every agent over steps 0..T
    let mut views: Vec<Vec<AgentTrajectory<'_>>> = Vec::with_capacity(n_agents);
    let mut groups: Vec<Dedup> = Vec::with_capacity(n_agents);
    let mut traces: Vec<Vec<SequenceTrace>> = Vec::with_capacity(n_agents);
    for (i, net) in agents.iter().enumerate() {
        let v: Vec<AgentTrajectory<'_>> = batch.iter().map(|ep| ep.agent_view(i)).collect();
        let g = dedup(&v, |e| batch[e].len());
        let mut tr = Vec::with_capacity(g.representatives.len());
        for &e in &g.representatives {
            let obs = v[e].observations();
            tr.push(network_forward_traced(
                &obs[..batch[e].len()],
                net.arch,
                net.params,
                &net.arch.initial_hidden(),
            )?);
        }
        views.push(v);
        groups.push(g);
        traces.push(tr);
    }

    let total_steps: usize = batch.iter().map(|ep| ep.len()).sum();
    let scale = 1.0 / total_steps as f64;

    // upstream gradients per [agent][group][t][action]
    let mut d_out: Vec<Vec<Vec<Vec<f64>>>> = if with_grads {
        traces
            .iter()
            .map(|tr| {
                tr.iter()
                    .map(|t| t.outputs().iter().map(|o| vec![0.0; o.len()]).collect())
                    .collect()
            })
            .collect()
    } else {
        Vec::new()
    };
    let mut mixer_grads = if with_grads {
        mixer.params().map(ParameterSet::zeros_like)
    } else {
        None
    };

    let mut loss = 0.0;
    let mut q_chosen = vec![0.0; n_agents];
    for (e, ep) in batch.iter().enumerate() {
        for t in 0..ep.len() {
            for i in 0..n_agents {
                let a = views[i][e].action(t);
                let q = &traces[i][groups[i].group_of[e]].outputs()[t];
                q_chosen[i] = *q.get(a).ok_or(FactorizationError::Dimension {
                    what: "action index",
                    expected: q.len(),
                    actual: a,
                })?;
            }
            let state = &ep.states[t];
            let (pred, dq) = match mixer {
                Mixer::Vdn { .. } => (super::vdn_total(&q_chosen)?, None),
                Mixer::Qmix(m) => {
                    let (v, trace) = m.forward_traced(&q_chosen, state)?;
                    (v, Some(trace))
                }
            };
            let err = pred - targets[e][t];
            loss += err * err * scale;
            if !with_grads {
                continue;
            }
            let d_pred = 2.0 * err * scale;
            let dq = match (mixer, dq) {
                (Mixer::Qmix(m), Some(trace)) => {
                    let g = mixer_grads.as_mut().expect("qmix has parameters");
                    m.backward(&trace, d_pred, g)?
                }
                _ => vec![d_pred; n_agents],
            };
            for i in 0..n_agents {
                let a = views[i][e].action(t);
                d_out[i][groups[i].group_of[e]][t][a] += dq[i];
            }
        }
    }
    if !loss.is_finite() {
        return Err(FactorizationError::NonFinite("TD loss"));
    }

    let mut agent_grads = Vec::new();
    if with_grads {
        for (i, net) in agents.iter().enumerate() {
            let mut g = net.params.zeros_like();
            for (trace, d) in traces[i].iter().zip(&d_out[i]) {
                network_backward(net.arch, net.params, trace, d, &mut g)?;
            }
            agent_grads.push(g);
        }
    }
    Ok(TdLossOutput {
        loss,
        agent_grads,
        mixer_grads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, LayerSpec, Tensor};

    /// Single agent, one-step episodes, a linear net that outputs `bias`.
    fn bias_net(bias: f64) -> (Architecture, ParameterSet) {
        let arch = Architecture::new(vec![LayerSpec::dense(0, 1, 1, Activation::Linear)]).unwrap();
        let mut p = arch.zero_params();
        *p.tensor_mut(0, "bias").unwrap() = Tensor::vector(vec![bias]).unwrap();
        (arch, p)
    }

    fn episode(rewards: &[f64], terminated: bool) -> EpisodeRecord {
        let t = rewards.len();
        EpisodeRecord {
            observations: vec![vec![vec![0.0]]; t + 1],
            states: vec![vec![0.0]; t + 1],
            avail_actions: vec![vec![vec![true]]; t + 1],
            actions: vec![vec![0]; t],
            agent_rewards: rewards.iter().map(|&r| vec![r]).collect(),
            team_rewards: rewards.to_vec(),
            terminated,
        }
    }

    #[test]
    fn terminal_target_is_reward() {
        let (arch, p) = bias_net(5.0);
        let ep = episode(&[1.0], true);
        let y = td_targets(
            &[&ep],
            &[AgentNet {
                arch: &arch,
                params: &p,
            }],
            &Mixer::Vdn { n_agents: 1 },
            0.99,
        )
        .unwrap();
        assert_eq!(y, vec![vec![1.0]]);
    }

    #[test]
    fn bootstrapped_target() {
        let (arch, p) = bias_net(2.0);
        let ep = episode(&[0.0, 0.0], false);
        let y = td_targets(
            &[&ep],
            &[AgentNet {
                arch: &arch,
                params: &p,
            }],
            &Mixer::Vdn { n_agents: 1 },
            0.99,
        )
        .unwrap();
        assert!((y[0][0] - 1.98).abs() < 1e-15);
    }

    #[test]
    fn zero_gamma_gives_rewards() {
        let (arch, p) = bias_net(3.0);
        let ep = episode(&[0.5, -1.0, 2.0], false);
        let y = td_targets(
            &[&ep],
            &[AgentNet {
                arch: &arch,
                params: &p,
            }],
            &Mixer::Vdn { n_agents: 1 },
            0.0,
        )
        .unwrap();
        assert_eq!(y, vec![vec![0.5, -1.0, 2.0]]);
    }

    #[test]
    fn loss_examples() {
        let (arch, p) = bias_net(1.0);
        let ep = episode(&[0.0], true);
        let nets = [AgentNet {
            arch: &arch,
            params: &p,
        }];
        let mixer = Mixer::Vdn { n_agents: 1 };
        assert_eq!(td_loss(&[&ep], &nets, &mixer, &[vec![1.0]]).unwrap(), 0.0);
        let out = td_loss_and_grads(&[&ep], &nets, &mixer, &[vec![3.0]]).unwrap();
        assert_eq!(out.loss, 4.0);
        // dL/db = 2 (1 - 3)
        assert_eq!(
            out.agent_grads[0].tensor(0, "bias").unwrap().data(),
            &[-4.0]
        );
        assert!(out.mixer_grads.is_none());
    }

    #[test]
    fn rejects_bad_gamma_and_shapes() {
        let (arch, p) = bias_net(1.0);
        let ep = episode(&[0.0], true);
        let nets = [AgentNet {
            arch: &arch,
            params: &p,
        }];
        let mixer = Mixer::Vdn { n_agents: 1 };
        assert!(td_targets(&[&ep], &nets, &mixer, 1.5).is_err());
        assert!(td_loss(&[&ep], &nets, &mixer, &[vec![1.0, 2.0]]).is_err());
        assert!(td_loss(&[], &nets, &mixer, &[]).is_err());
        assert!(td_loss(&[&ep], &nets, &Mixer::Vdn { n_agents: 2 }, &[vec![0.0]]).is_err());
    }
}
