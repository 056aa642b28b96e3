//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Set `FEDMIX_ACCEPTANCE=1,4,8` to run a subset.

use std::path::Path;
use std::time::Instant;

use fedmix_cli::resolve_config;
use fedmix_core::envs::{Environment, TwoStepCoordination};
use fedmix_core::episode::EpisodeRecord;
use fedmix_core::factorization::{
    monotonicity_probe, td_loss, td_loss_and_grads, vdn_total, AgentNet, Mixer, MixerNetwork,
};
use fedmix_core::federation::{aggregate, aggregation_weights, apply_global, AggregationMode};
use fedmix_core::nn::{init_network, network_step, Activation, Architecture, ParameterSet};
use fedmix_core::trainer::{run, Algorithm, RunSummary, TrainConfig, METRICS_FILE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------- criterion 1

fn random_batch(
    rng: &mut ChaCha8Rng,
    n_agents: usize,
    obs_dim: usize,
    state_dim: usize,
    n_actions: usize,
) -> Vec<EpisodeRecord> {
    (0..rng.random_range(1..4))
        .map(|_| {
            let len = rng.random_range(1..5);
            let mut v =
                |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
            let observations = (0..=len)
                .map(|_| (0..n_agents).map(|_| v(obs_dim)).collect())
                .collect();
            let states = (0..=len).map(|_| v(state_dim)).collect();
            let team: Vec<f64> = v(len);
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
                agent_rewards: team
                    .iter()
                    .map(|&r| vec![r / n_agents as f64; n_agents])
                    .collect(),
                team_rewards: team,
                terminated: rng.random_bool(0.5),
            }
        })
        .collect()
}

/// Central difference of `f` along coordinate `k` of `flat`.
fn central_difference(flat: &[f64], k: usize, h: f64, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let mut probe = flat.to_vec();
    probe[k] = flat[k] + h;
    let up = f(&probe);
    probe[k] = flat[k] - h;
    let down = f(&probe);
    (up - down) / (2.0 * h)
}

fn criterion_gradients() -> Outcome {
    const H: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut largest = 0;
    for net in 0..20 {
        let n_agents = rng.random_range(2..4);
        let obs_dim = rng.random_range(2..5);
        let hidden = rng.random_range(2..5);
        let n_actions = rng.random_range(2..4);
        let state_dim = rng.random_range(2..4);
        let arch = Architecture::agent_default(obs_dim, hidden, n_actions).unwrap();
        largest = largest.max(arch.num_params());
        assert!(arch.num_params() <= 200);
        let agents: Vec<ParameterSet> = (0..n_agents)
            .map(|_| init_network(&arch, false, &mut rng).unwrap())
            .collect();
        let mixer = if net % 4 == 0 {
            Mixer::Vdn { n_agents }
        } else {
            Mixer::Qmix(
                MixerNetwork::new(n_agents, state_dim, 3, state_dim, false, &mut rng).unwrap(),
            )
        };
        let episodes = random_batch(&mut rng, n_agents, obs_dim, state_dim, n_actions);
        let batch: Vec<&EpisodeRecord> = episodes.iter().collect();
        let targets: Vec<Vec<f64>> = episodes
            .iter()
            .map(|e| (0..e.len()).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        let nets: Vec<AgentNet<'_>> = agents
            .iter()
            .map(|p| AgentNet {
                arch: &arch,
                params: p,
            })
            .collect();
        let analytic = td_loss_and_grads(&batch, &nets, &mixer, &targets).unwrap();

        let mut compare = |a: f64, n: f64| {
            worst = worst.max((a - n).abs() / a.abs().max(n.abs()).max(1e-4));
        };
        for i in 0..n_agents {
            let flat = agents[i].flatten();
            let grad = analytic.agent_grads[i].flatten();
            for k in 0..flat.len() {
                let numeric = central_difference(&flat, k, H, |p| {
                    let mut perturbed = agents.clone();
                    perturbed[i].assign_flat(p).unwrap();
                    let nets: Vec<AgentNet<'_>> = perturbed
                        .iter()
                        .map(|p| AgentNet {
                            arch: &arch,
                            params: p,
                        })
                        .collect();
                    td_loss(&batch, &nets, &mixer, &targets).unwrap()
                });
                compare(grad[k], numeric);
            }
        }
        if let Some(mixer_grads) = &analytic.mixer_grads {
            let flat = mixer.params().unwrap().flatten();
            let grad = mixer_grads.flatten();
            for k in 0..flat.len() {
                let numeric = central_difference(&flat, k, H, |p| {
                    let mut m = mixer.clone();
                    m.params_mut().unwrap().assign_flat(p).unwrap();
                    let nets: Vec<AgentNet<'_>> = agents
                        .iter()
                        .map(|p| AgentNet {
                            arch: &arch,
                            params: p,
                        })
                        .collect();
                    td_loss(&batch, &nets, &m, &targets).unwrap()
                });
                compare(grad[k], numeric);
            }
        }
    }
    outcome(
        worst < 1e-4,
        format!("20 networks (largest {largest} params), max relative error {worst:.2e} (< 1e-4)"),
    )
}

// ---------------------------------------------------------------- criterion 2

fn criterion_monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mixer = MixerNetwork::new(4, 6, 64, 6, true, &mut rng).unwrap();
    let min = monotonicity_probe(&mixer, 1000, &mut rng).unwrap();
    outcome(
        min >= -1e-9,
        format!("1000 samples, min Q_tot increase {min:.3e} (>= -1e-9)"),
    )
}

// ---------------------------------------------------------------- criterion 3

fn max_abs_diff(a: &ParameterSet, b: &ParameterSet) -> f64 {
    a.flatten()
        .iter()
        .zip(b.flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn criterion_aggregation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_sum = 0.0f64;
    let mut negative = false;
    for _ in 0..1000 {
        let n = rng.random_range(1..10);
        let scale = 10f64.powi(rng.random_range(-3..4));
        let sums: Vec<f64> = (0..n)
            .map(|_| rng.random_range(-1.0..1.0) * scale)
            .collect();
        for mode in AggregationMode::ALL {
            let w = aggregation_weights(mode, &sums, 1e-6).unwrap();
            negative |= w.iter().any(|&x| x < 0.0);
            worst_sum = worst_sum.max((w.iter().sum::<f64>() - 1.0).abs());
        }
    }

    let arch = Architecture::agent_default(5, 6, 3).unwrap();
    let mut equal_gap = 0.0f64;
    let mut fixed_gap = 0.0f64;
    let mut pppps_exact = true;
    for _ in 0..50 {
        let n = rng.random_range(2..6);
        let params: Vec<ParameterSet> = (0..n)
            .map(|_| init_network(&arch, true, &mut rng).unwrap())
            .collect();
        let refs: Vec<&ParameterSet> = params.iter().collect();

        let r = rng.random_range(-10.0..10.0);
        let apps = aggregation_weights(AggregationMode::Apps, &vec![r; n], 1e-6).unwrap();
        let rspps = aggregation_weights(AggregationMode::Rspps, &vec![r; n], 1e-6).unwrap();
        for (a, b) in apps.iter().zip(&rspps) {
            equal_gap = equal_gap.max((a - b).abs());
        }
        let ga = aggregate(&refs, &apps, 0).unwrap();
        let gr = aggregate(&refs, &rspps, 0).unwrap();
        for id in ga.aggregated_layer_ids() {
            for (name, t) in ga.layer(id).unwrap() {
                for (x, y) in t.data().iter().zip(gr.layer(id).unwrap()[name].data()) {
                    equal_gap = equal_gap.max((x - y).abs());
                }
            }
        }

        let same = vec![&params[0]; n];
        let w = aggregation_weights(
            AggregationMode::Rspps,
            &(0..n)
                .map(|_| rng.random_range(-5.0..5.0))
                .collect::<Vec<_>>(),
            1e-6,
        )
        .unwrap();
        let g = aggregate(&same, &w, 0).unwrap();
        let mut rebuilt = params[0].clone();
        apply_global(&mut rebuilt, &g, 1.0).unwrap();
        fixed_gap = fixed_gap.max(max_abs_diff(&rebuilt, &params[0]));

        let cutoff = 2;
        let g = aggregate(&refs, &w_for(n, &mut rng), cutoff).unwrap();
        for p in &params {
            let mut local = p.clone();
            apply_global(&mut local, &g, rng.random_range(0.01..=1.0)).unwrap();
            for id in 0..cutoff {
                let before: Vec<u64> = p
                    .layer(id)
                    .unwrap()
                    .values()
                    .flat_map(|t| t.data().iter().map(|v| v.to_bits()))
                    .collect();
                let after: Vec<u64> = local
                    .layer(id)
                    .unwrap()
                    .values()
                    .flat_map(|t| t.data().iter().map(|v| v.to_bits()))
                    .collect();
                pppps_exact &= before == after;
            }
        }
    }
    let passed =
        !negative && worst_sum <= 1e-12 && equal_gap <= 1e-12 && fixed_gap <= 1e-12 && pppps_exact;
    outcome(
        passed,
        format!(
            "simplex max |sum-1| {worst_sum:.1e}, negative weights {negative}, rspps-vs-apps gap {equal_gap:.1e}, fixed-point gap {fixed_gap:.1e}, personalized layers bit-identical {pppps_exact}"
        ),
    )
}

fn w_for(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let sums: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..20.0)).collect();
    aggregation_weights(AggregationMode::Pppps, &sums, 1e-6).unwrap()
}

// ---------------------------------------------------------------- criterion 4

fn argmax(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate() {
        if v > q[best] {
            best = i;
        }
    }
    best
}

fn igm_holds(q0: &[f64], q1: &[f64]) -> bool {
    let greedy = (argmax(q0), argmax(q1));
    let mut best = (0, 0);
    let mut best_v = f64::NEG_INFINITY;
    for a in 0..q0.len() {
        for b in 0..q1.len() {
            let v = vdn_total(&[q0[a], q1[b]]).unwrap();
            if v > best_v {
                best_v = v;
                best = (a, b);
            }
        }
    }
    greedy == best
}

fn criterion_vdn_igm() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let env = TwoStepCoordination::new();
    let spec = env.spec();
    let arch = Architecture::agent_default(spec.obs_dim, 16, spec.n_actions).unwrap();
    let mut checked = 0;
    let mut violations = 0;
    for _ in 0..100 {
        let params: Vec<ParameterSet> = (0..2)
            .map(|_| init_network(&arch, rng.random_bool(0.5), &mut rng).unwrap())
            .collect();
        let q_of = |obs: &[Vec<f64>], hidden: &[Vec<f64>]| -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
            let mut qs = Vec::new();
            let mut hs = Vec::new();
            for i in 0..2 {
                let (q, h) = network_step(&obs[i], &arch, &params[i], &hidden[i]).unwrap();
                qs.push(q);
                hs.push(h);
            }
            (qs, hs)
        };
        let mut e = env.clone();
        let start = e.reset(0);
        let h0 = vec![arch.initial_hidden(); 2];
        let (q, h1) = q_of(&start.observations, &h0);
        checked += 1;
        violations += usize::from(!igm_holds(&q[0], &q[1]));
        for a in 0..2 {
            for b in 0..2 {
                let mut branch = env.clone();
                branch.reset(0);
                let next = branch.step(&[a, b]).unwrap();
                let (q, _) = q_of(&next.observations, &h1);
                checked += 1;
                violations += usize::from(!igm_holds(&q[0], &q[1]));
            }
        }
    }
    outcome(
        violations == 0,
        format!("100 parameter draws, {checked} states, {violations} IGM violations"),
    )
}

// ---------------------------------------------------------------- criteria 5 and 7

fn two_step_config(seed: u64, dir: &Path) -> TrainConfig {
    TrainConfig {
        env: "two_step".into(),
        algo: Algorithm::Qmix,
        sharing: AggregationMode::Apps,
        max_train_steps: 50_000,
        seed,
        out_dir: dir.to_path_buf(),
        ..TrainConfig::default()
    }
}

fn criterion_learning(root: &Path) -> Outcome {
    let mut rates = Vec::new();
    for seed in 1..=5 {
        let summary = run(&two_step_config(seed, &root.join(format!("seed_{seed}")))).unwrap();
        rates.push(summary.final_row().map_or(0.0, |r| r.eval_success_rate));
    }
    let good = rates.iter().filter(|&&r| r >= 0.95).count();
    outcome(
        good >= 4,
        format!("final success rates {rates:?}, {good}/5 seeds >= 0.95 (need 4)"),
    )
}

fn criterion_determinism(root: &Path) -> Outcome {
    let first = root.join("seed_1");
    let again = root.join("seed_1_again");
    if !first.join(METRICS_FILE).exists() {
        run(&two_step_config(1, &first)).unwrap();
    }
    run(&two_step_config(1, &again)).unwrap();
    let a = std::fs::read(first.join(METRICS_FILE)).unwrap();
    let b = std::fs::read(again.join(METRICS_FILE)).unwrap();
    outcome(
        a == b && !a.is_empty(),
        format!(
            "two runs of seed 1: {} vs {} bytes, identical {}",
            a.len(),
            b.len(),
            a == b
        ),
    )
}

// ---------------------------------------------------------------- criterion 6

/// Scaled-down harvest configuration that fits the one-hour budget on a
/// single core. The aggregation interval keeps the number of federation
/// rounds per run close to that of the full-length default configuration
/// (1e6 env steps at one round per 300 updates of 30-step episodes).
fn harvest_config(seed: u64, sharing: AggregationMode, dir: &Path) -> TrainConfig {
    TrainConfig {
        env: "harvest_asym".into(),
        algo: Algorithm::Vdn,
        sharing,
        seed,
        max_train_steps: 80_000,
        evaluate_freq: 2500,
        hidden_dim: 16,
        batch_size: 16,
        aggregation_freq: 24,
        out_dir: dir.to_path_buf(),
        ..TrainConfig::default()
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn criterion_directional(root: &Path) -> Outcome {
    let modes = [
        AggregationMode::Rspps,
        AggregationMode::Apps,
        AggregationMode::None,
    ];
    let mut medians = Vec::new();
    let mut finals = Vec::new();
    let mut per_seed = Vec::new();
    for mode in modes {
        let mut first = Vec::new();
        let mut last = Vec::new();
        for seed in 1..=5 {
            let dir = root.join(format!("{mode}_{seed}"));
            let summary: RunSummary = run(&harvest_config(seed, mode, &dir)).unwrap();
            first.push(
                summary
                    .first_success_env_step()
                    .map_or(f64::INFINITY, |s| s as f64),
            );
            last.push(summary.final_row().map_or(0.0, |r| r.eval_return_mean));
        }
        per_seed.push(format!(
            "{mode}: first success {first:?}, final return {last:?}"
        ));
        medians.push(median(first));
        finals.push(last.iter().sum::<f64>() / last.len() as f64);
    }
    let ordered = medians[0] <= medians[1] && medians[1] <= medians[2];
    let margin = finals[0] >= finals[2] * 1.1;
    outcome(
        ordered && margin,
        format!(
            "median steps to first success rspps {} apps {} none {}; final mean return rspps {:.3} none {:.3} (need >= {:.3}); {}",
            medians[0], medians[1], medians[2], finals[0], finals[2], finals[2] * 1.1, per_seed.join("; ")
        ),
    )
}

// ---------------------------------------------------------------- criterion 8

fn criterion_defaults() -> Outcome {
    let c = resolve_config(Some(""), &[], None).unwrap();
    let mut vdn = c.clone();
    vdn.set("algo", "vdn").unwrap();
    let rows: Vec<(&str, bool)> = vec![
        ("Max Train Steps 1e6", c.max_train_steps == 1_000_000),
        ("Evaluate Freq 5000", c.evaluate_freq == 5000),
        ("Target Update Freq 200", c.target_update_freq == 200),
        (
            "Base Algorithm VDN, QMIX",
            c.algo == Algorithm::Qmix && vdn.algo == Algorithm::Vdn,
        ),
        ("Epsilon Decay Steps 50000", c.epsilon_decay_steps == 50_000),
        ("Epsilon Max 1", c.epsilon_max == 1.0),
        ("Epsilon Min 0.05", c.epsilon_min == 0.05),
        ("Buffer Size 5000", c.buffer_size == 5000),
        ("Batch Size 96", c.batch_size == 96),
        ("Learning rate 5e-4", c.learning_rate == 5e-4),
        ("Gamma 0.99", c.gamma == 0.99),
        ("Mixed Hidden Num 1", c.mixer_hidden_layers == 1),
        (
            "Mixed Hidden Dim (State Dim, 64)",
            c.hypernet_dim.is_none() && c.mixing_dim == 64,
        ),
        ("Optimizer Adam", c.optimizer == "adam"),
        ("Grad Clip True", c.grad_clip),
        ("Activation Function ReLu", c.activation == Activation::Relu),
        ("Orthogonal Initialization True", c.orthogonal_init),
        ("Lr Decay False", !c.lr_decay),
        ("Soft Update 0.05", c.soft_update == 0.05),
        ("Reward Buffer Size 96", c.reward_buffer_size == 96),
        ("Aggregation Freq 300", c.aggregation_freq == 300),
        ("Personalized Layer 4", c.personalized_layers == 4),
        ("Evaluate episodes 32", c.evaluate_episodes == 32),
    ];
    let failed: Vec<&str> = rows.iter().filter(|r| !r.1).map(|r| r.0).collect();
    outcome(
        failed.is_empty(),
        if failed.is_empty() {
            format!("{} rows match", rows.len())
        } else {
            format!("mismatched rows: {}", failed.join(", "))
        },
    )
}

// ---------------------------------------------------------------- driver

fn main() {
    let selected: Option<Vec<u32>> = std::env::var("FEDMIX_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |id: u32| selected.as_ref().is_none_or(|s| s.contains(&id));
    let scratch = tempfile::tempdir().expect("temporary directory");
    let two_step_root = scratch.path().join("two_step");
    let harvest_root = scratch.path().join("harvest");

    type Criterion<'a> = (u32, &'static str, Box<dyn Fn() -> Outcome + 'a>);
    let criteria: Vec<Criterion<'_>> = vec![
        (8, "hyperparameter defaults", Box::new(criterion_defaults)),
        (1, "gradient oracle", Box::new(criterion_gradients)),
        (2, "mixer monotonicity", Box::new(criterion_monotonicity)),
        (3, "aggregation algebra", Box::new(criterion_aggregation)),
        (4, "VDN IGM", Box::new(criterion_vdn_igm)),
        (
            5,
            "two-step learning",
            Box::new(|| criterion_learning(&two_step_root)),
        ),
        (
            7,
            "determinism",
            Box::new(|| criterion_determinism(&two_step_root)),
        ),
        (
            6,
            "harvest_asym sharing direction",
            Box::new(|| criterion_directional(&harvest_root)),
        ),
    ];

    let mut failures = 0;
    for (id, name, check) in &criteria {
        if !wanted(*id) {
            continue;
        }
        let start = Instant::now();
        let result = check();
        let status = if result.passed { "PASS" } else { "FAIL" };
        println!(
            "criterion {id} [{name}] {status}: {} ({:.1}s)",
            result.detail,
            start.elapsed().as_secs_f64()
        );
        failures += usize::from(!result.passed);
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
