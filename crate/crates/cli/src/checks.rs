//! Invariant self-test behind the `check` subcommand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fedmix_core::episode::EpisodeRecord;
use fedmix_core::factorization::{
    monotonicity_probe, td_loss, td_loss_and_grads, AgentNet, Mixer, MixerNetwork,
};
use fedmix_core::federation::{aggregate, aggregation_weights, apply_global, AggregationMode};
use fedmix_core::nn::{init_network, Architecture, ParameterSet};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Runs every check. All randomness comes from `seed`.
pub fn run_checks(seed: u64) -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vec![
        gradient_check(&mut rng),
        monotonicity_check(&mut rng),
        aggregation_check(&mut rng),
    ]
}

fn random_episode(
    rng: &mut ChaCha8Rng,
    n_agents: usize,
    obs_dim: usize,
    state_dim: usize,
    n_actions: usize,
    len: usize,
) -> EpisodeRecord {
    let mut vec = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
    let observations = (0..=len)
        .map(|_| (0..n_agents).map(|_| vec(obs_dim)).collect())
        .collect();
    let states = (0..=len).map(|_| vec(state_dim)).collect();
    let team_rewards: Vec<f64> = vec(len);
    let agent_rewards = team_rewards
        .iter()
        .map(|&r| vec![r / n_agents as f64; n_agents])
        .collect();
    let actions = (0..len)
        .map(|_| {
            (0..n_agents)
                .map(|_| rng.random_range(0..n_actions))
                .collect()
        })
        .collect();
    EpisodeRecord {
        observations,
        states,
        avail_actions: vec![vec![vec![true; n_actions]; n_agents]; len + 1],
        actions,
        agent_rewards,
        team_rewards,
        terminated: rng.random_bool(0.5),
    }
}

/// Central differences on the TD loss of small random QMIX setups.
fn gradient_check(rng: &mut ChaCha8Rng) -> CheckOutcome {
    const H: f64 = 1e-5;
    let mut worst = 0.0f64;
    let run = |rng: &mut ChaCha8Rng, worst: &mut f64| -> Result<(), String> {
        for _ in 0..5 {
            let (n_agents, obs, hidden, actions, state) = (2, 3, 3, 2, 2);
            let arch =
                Architecture::agent_default(obs, hidden, actions).map_err(|e| e.to_string())?;
            let mut agents: Vec<ParameterSet> = (0..n_agents)
                .map(|_| init_network(&arch, false, rng))
                .collect::<Result<_, _>>()
                .map_err(|e| e.to_string())?;
            let mut mixer = Mixer::Qmix(
                MixerNetwork::new(n_agents, state, 2, 2, false, rng).map_err(|e| e.to_string())?,
            );
            let episodes: Vec<EpisodeRecord> = (0..2)
                .map(|_| random_episode(rng, n_agents, obs, state, actions, 3))
                .collect();
            let batch: Vec<&EpisodeRecord> = episodes.iter().collect();
            let targets: Vec<Vec<f64>> = episodes
                .iter()
                .map(|e| (0..e.len()).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect();
            let loss_of = |agents: &[ParameterSet], mixer: &Mixer| -> f64 {
                let nets: Vec<AgentNet<'_>> = agents
                    .iter()
                    .map(|p| AgentNet {
                        arch: &arch,
                        params: p,
                    })
                    .collect();
                td_loss(&batch, &nets, mixer, &targets).expect("loss")
            };
            let nets: Vec<AgentNet<'_>> = agents
                .iter()
                .map(|p| AgentNet {
                    arch: &arch,
                    params: p,
                })
                .collect();
            let out =
                td_loss_and_grads(&batch, &nets, &mixer, &targets).map_err(|e| e.to_string())?;
            let mut compare = |analytic: f64, numeric: f64| {
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4);
                *worst = worst.max(rel);
            };
            for a in 0..n_agents {
                let flat = agents[a].flatten();
                let grad = out.agent_grads[a].flatten();
                for k in 0..flat.len() {
                    let mut probe = flat.clone();
                    probe[k] = flat[k] + H;
                    agents[a].assign_flat(&probe).map_err(|e| e.to_string())?;
                    let up = loss_of(&agents, &mixer);
                    probe[k] = flat[k] - H;
                    agents[a].assign_flat(&probe).map_err(|e| e.to_string())?;
                    let down = loss_of(&agents, &mixer);
                    agents[a].assign_flat(&flat).map_err(|e| e.to_string())?;
                    compare(grad[k], (up - down) / (2.0 * H));
                }
            }
            let grad = out.mixer_grads.expect("qmix has mixer gradients").flatten();
            let flat = mixer.params().expect("qmix").flatten();
            for k in 0..flat.len() {
                let mut probe = flat.clone();
                probe[k] = flat[k] + H;
                mixer
                    .params_mut()
                    .unwrap()
                    .assign_flat(&probe)
                    .map_err(|e| e.to_string())?;
                let up = loss_of(&agents, &mixer);
                probe[k] = flat[k] - H;
                mixer
                    .params_mut()
                    .unwrap()
                    .assign_flat(&probe)
                    .map_err(|e| e.to_string())?;
                let down = loss_of(&agents, &mixer);
                mixer
                    .params_mut()
                    .unwrap()
                    .assign_flat(&flat)
                    .map_err(|e| e.to_string())?;
                compare(grad[k], (up - down) / (2.0 * H));
            }
        }
        Ok(())
    };
    match run(rng, &mut worst) {
        Ok(()) => CheckOutcome {
            name: "gradient",
            passed: worst < 1e-4,
            detail: format!("max relative error {worst:.3e}"),
        },
        Err(e) => CheckOutcome {
            name: "gradient",
            passed: false,
            detail: e,
        },
    }
}

fn monotonicity_check(rng: &mut ChaCha8Rng) -> CheckOutcome {
    let result =
        MixerNetwork::new(3, 4, 8, 4, true, rng).and_then(|m| monotonicity_probe(&m, 1000, rng));
    match result {
        Ok(min) => CheckOutcome {
            name: "monotonicity",
            passed: min >= -1e-9,
            detail: format!("minimum increase {min:.3e}"),
        },
        Err(e) => CheckOutcome {
            name: "monotonicity",
            passed: false,
            detail: e.to_string(),
        },
    }
}

fn aggregation_check(rng: &mut ChaCha8Rng) -> CheckOutcome {
    let mut failures = Vec::new();
    for _ in 0..200 {
        let n = rng.random_range(1..8);
        let sums: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..50.0)).collect();
        for mode in AggregationMode::ALL {
            match aggregation_weights(mode, &sums, 1e-6) {
                Ok(w)
                    if w.iter().all(|&x| x >= 0.0)
                        && (w.iter().sum::<f64>() - 1.0).abs() <= 1e-12 => {}
                other => failures.push(format!("{mode} weights {other:?}")),
            }
        }
    }
    let arch = Architecture::agent_default(4, 5, 3).expect("valid architecture");
    let params = init_network(&arch, true, rng).expect("init");
    let copies = vec![&params; 3];
    match aggregate(&copies, &[1.0 / 3.0; 3], 0) {
        Ok(g) => {
            for (id, layer) in params.layers() {
                let same = g.layer(id).is_some_and(|gl| {
                    gl.iter().all(|(name, t)| {
                        t.data()
                            .iter()
                            .zip(layer[name].data())
                            .all(|(a, b)| (a - b).abs() <= 1e-12)
                    })
                });
                if !same {
                    failures.push(format!("fixed point broken in layer {id}"));
                }
            }
        }
        Err(e) => failures.push(e.to_string()),
    }
    let other = init_network(&arch, true, rng).expect("init");
    let mut local = params.clone();
    let isolated = aggregate(&[&params, &other], &[0.5, 0.5], 2)
        .and_then(|g| apply_global(&mut local, &g, 1.0))
        .map(|()| (0..2).all(|id| local.layer(id) == params.layer(id)));
    if isolated != Ok(true) {
        failures.push("personalized layers changed".to_string());
    }
    CheckOutcome {
        name: "aggregation",
        passed: failures.is_empty(),
        detail: if failures.is_empty() {
            "simplex, fixed point and personalization hold".to_string()
        } else {
            failures.join("; ")
        },
    }
}
