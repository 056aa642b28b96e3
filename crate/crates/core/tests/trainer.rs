//! Trainer operations and run-level contracts on small configurations.

use std::collections::BTreeSet;

use fedmix_core::federation::AggregationMode;
use fedmix_core::nn::{ParameterSet, Tensor};
use fedmix_core::trainer::{
    artifact_names, run, Algorithm, TrainConfig, Trainer, METRICS_FILE, METRICS_HEADER,
};

fn small(dir: &std::path::Path) -> TrainConfig {
    TrainConfig {
        max_train_steps: 600,
        evaluate_freq: 200,
        evaluate_episodes: 4,
        batch_size: 8,
        buffer_size: 50,
        hidden_dim: 8,
        mixing_dim: 8,
        target_update_freq: 20,
        aggregation_freq: 10,
        epsilon_decay_steps: 400,
        out_dir: dir.to_path_buf(),
        ..TrainConfig::default()
    }
}

/// Parameters making every agent pick action 1 everywhere: zero weights, head
/// bias `[0, 1]`.
fn always_one(template: &ParameterSet) -> ParameterSet {
    let mut p = template.zeros_like();
    let last = *p.layer_ids().last().unwrap();
    *p.tensor_mut(last, "bias").unwrap() = Tensor::vector(vec![0.0, 1.0]).unwrap();
    p
}

#[test]
fn zero_steps_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let config = TrainConfig {
        max_train_steps: 0,
        ..small(dir.path())
    };
    let summary = run(&config).unwrap();
    assert!(summary.rows.is_empty());
    let csv = std::fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
    assert_eq!(csv, format!("{METRICS_HEADER}\n"));
    for name in artifact_names(2) {
        assert!(dir.path().join(&name).exists(), "{name} missing");
    }
}

#[test]
fn runs_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for mode in [AggregationMode::Rspps, AggregationMode::Pppps] {
        let ca = TrainConfig {
            sharing: mode,
            env: "harvest_asym".into(),
            ..small(a.path())
        };
        let cb = TrainConfig {
            out_dir: b.path().to_path_buf(),
            ..ca.clone()
        };
        let sa = run(&ca).unwrap();
        let sb = run(&cb).unwrap();
        assert_eq!(sa, sb);
        assert!(!sa.audits.is_empty());
        let read = |d: &std::path::Path, f: &str| std::fs::read(d.join(f)).unwrap();
        assert_eq!(read(a.path(), METRICS_FILE), read(b.path(), METRICS_FILE));
        assert_eq!(
            read(a.path(), "aggregation.log"),
            read(b.path(), "aggregation.log")
        );
    }
}

#[test]
fn rollout_records_rewards_and_advances_steps() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = Trainer::new(TrainConfig {
        env: "harvest".into(),
        ..small(dir.path())
    })
    .unwrap();
    let limit = t.env_spec().episode_limit;
    let before: Vec<u64> = t.learners().iter().map(|l| l.params().checksum()).collect();
    let ep = t.rollout_episode().unwrap();
    assert!(ep.len() <= limit && !ep.is_empty());
    assert_eq!(t.env_step(), ep.len() as u64);
    for (i, l) in t.learners().iter().enumerate() {
        assert_eq!(l.rewards().len(), ep.len());
        let own: f64 = (0..ep.len()).map(|s| ep.agent_rewards[s][i]).sum();
        assert_eq!(l.rewards().sum(), own);
        assert_eq!(l.params().checksum(), before[i]);
    }
}

#[test]
fn training_waits_for_a_full_batch() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = Trainer::new(small(dir.path())).unwrap();
    for _ in 0..7 {
        let ep = t.rollout_episode().unwrap();
        t.store_episode(ep);
    }
    let before: Vec<ParameterSet> = t.learners().iter().map(|l| l.params().clone()).collect();
    assert_eq!(t.train_iteration().unwrap(), None);
    assert_eq!(t.train_step(), 0);
    for (l, p) in t.learners().iter().zip(&before) {
        assert_eq!(l.params(), p);
    }
    let ep = t.rollout_episode().unwrap();
    t.store_episode(ep);
    assert!(t.train_iteration().unwrap().is_some());
    assert_eq!(t.train_step(), 1);
}

#[test]
fn target_networks_follow_the_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = Trainer::new(small(dir.path())).unwrap();
    for _ in 0..8 {
        let ep = t.rollout_episode().unwrap();
        t.store_episode(ep);
    }
    for step in 1..=20u64 {
        t.train_iteration().unwrap();
        let synced = t.update_targets();
        assert_eq!(synced, step == 20);
        for l in t.learners() {
            assert_eq!(l.params() == l.target_params(), step == 20);
        }
        assert_eq!(t.mixer() == t.target_mixer(), step == 20);
    }
    // idempotent while online nets are unchanged
    let snapshot: Vec<ParameterSet> = t
        .learners()
        .iter()
        .map(|l| l.target_params().clone())
        .collect();
    assert!(t.update_targets());
    for (l, s) in t.learners().iter().zip(&snapshot) {
        assert_eq!(l.target_params(), s);
    }
}

fn trained_until_round(
    mode: AggregationMode,
    dir: &std::path::Path,
) -> (Trainer, Vec<ParameterSet>) {
    let mut t = Trainer::new(TrainConfig {
        sharing: mode,
        env: "harvest_asym".into(),
        ..small(dir)
    })
    .unwrap();
    for _ in 0..8 {
        let ep = t.rollout_episode().unwrap();
        t.store_episode(ep);
    }
    for _ in 0..10 {
        t.train_iteration().unwrap();
    }
    let before = t.learners().iter().map(|l| l.params().clone()).collect();
    (t, before)
}

#[test]
fn no_sharing_means_no_round() {
    let dir = tempfile::tempdir().unwrap();
    let (mut t, before) = trained_until_round(AggregationMode::None, dir.path());
    assert!(t.federation_round().unwrap().is_none());
    for (l, p) in t.learners().iter().zip(&before) {
        assert_eq!(l.params().checksum(), p.checksum());
    }
}

#[test]
fn personalized_layers_survive_rounds() {
    let dir = tempfile::tempdir().unwrap();
    let (mut t, before) = trained_until_round(AggregationMode::Pppps, dir.path());
    let cutoff = t.aggregation_policy().personalized_layers;
    assert_eq!(cutoff, 2);
    let audit = t.federation_round().unwrap().expect("round due at step 10");
    assert_eq!(audit.train_step, 10);
    for (l, p) in t.learners().iter().zip(&before) {
        for id in 0..cutoff {
            assert_eq!(l.params().layer(id), p.layer(id));
        }
        assert_ne!(l.params().layer(2), p.layer(2));
    }
}

#[test]
fn averaging_identical_learners_changes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = Trainer::new(TrainConfig {
        sharing: AggregationMode::Apps,
        aggregation_freq: 1,
        ..small(dir.path())
    })
    .unwrap();
    for _ in 0..8 {
        let ep = t.rollout_episode().unwrap();
        t.store_episode(ep);
    }
    t.train_iteration().unwrap();
    let common = t.learners()[1].params().clone();
    t.set_agent_params(&[common.clone(), common.clone()])
        .unwrap();
    t.federation_round().unwrap().expect("round due");
    for l in t.learners() {
        for ((_, _, a), (_, _, b)) in l.params().iter().zip(common.iter()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn greedy_policy_reaching_the_optimum_scores_full_success() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = Trainer::new(TrainConfig {
        epsilon_max: 0.0,
        epsilon_min: 0.0,
        ..small(dir.path())
    })
    .unwrap();
    let p = always_one(t.learners()[0].params());
    t.set_agent_params(&[p.clone(), p]).unwrap();
    let eval = t.evaluate().unwrap();
    assert_eq!(eval.mean_return, 8.0);
    assert_eq!(eval.success_rate, 1.0);
    let ep = t.rollout_episode().unwrap();
    assert_eq!(ep.team_return(), 8.0);
}

#[test]
fn untrained_two_step_returns_are_reachable_payoffs() {
    let allowed: BTreeSet<u64> = [0, 1, 7, 8].into_iter().collect();
    for seed in 0..10 {
        let dir = tempfile::tempdir().unwrap();
        for algo in [Algorithm::Vdn, Algorithm::Qmix] {
            let t = Trainer::new(TrainConfig {
                seed,
                algo,
                ..small(dir.path())
            })
            .unwrap();
            let eval = t.evaluate().unwrap();
            assert!(allowed.contains(&(eval.mean_return as u64)));
            assert_eq!(eval.mean_return.fract(), 0.0);
        }
    }
}
