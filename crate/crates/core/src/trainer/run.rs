use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::output::{unix_now, MetricsRow, RunManifest, RunOutput};
use super::{AgentLearner, Algorithm, ReplayBuffer, TrainConfig, TrainError};
use crate::envs::{Env, EnvSpec, Environment};
use crate::episode::EpisodeRecord;
use crate::factorization::{
    epsilon_greedy, greedy_action, td_loss_and_grads, td_targets, AgentNet, EpsilonSchedule, Mixer,
    MixerNetwork,
};
use crate::federation::{
    aggregate, aggregation_weights, apply_global, should_aggregate, AggregationMode,
    AggregationPolicy, RoundAudit,
};
use crate::nn::{
    adam_update, clip_global_norm, init_network, network_step, Activation, Architecture, LayerSpec,
    OptimizerState, ParameterSet,
};
use crate::seed::{derive_seed, stream_rng, Stream};

/// Greedy evaluation outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    pub mean_return: f64,
    pub success_rate: f64,
}

/// Everything a finished run reports besides its files.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub rows: Vec<MetricsRow>,
    pub audits: Vec<RoundAudit>,
    pub env_steps: u64,
    pub train_steps: u64,
}

impl RunSummary {
    /// Env step of the first evaluation with full success.
    pub fn first_success_env_step(&self) -> Option<u64> {
        self.rows
            .iter()
            .find(|r| r.eval_success_rate >= 1.0)
            .map(|r| r.env_step)
    }

    pub fn final_row(&self) -> Option<&MetricsRow> {
        self.rows.last()
    }
}

/// Agent network for an environment: dense, recurrent, dense head.
pub fn agent_architecture(
    spec: &EnvSpec,
    hidden_dim: usize,
    activation: Activation,
) -> Result<Architecture, TrainError> {
    Ok(Architecture::new(vec![
        LayerSpec::dense(0, spec.obs_dim, hidden_dim, activation),
        LayerSpec::recurrent(1, hidden_dim, hidden_dim),
        LayerSpec::dense(2, hidden_dim, spec.n_actions, Activation::Linear),
    ])?)
}

/// Training state of one run.
///
/// Agent learners are only touched one at a time, except inside
/// [`Trainer::federation_round`].
pub struct Trainer {
    config: TrainConfig,
    arch: Architecture,
    env: Env,
    spec: EnvSpec,
    layout_seed: u64,
    learners: Vec<AgentLearner>,
    mixer: Mixer,
    target_mixer: Mixer,
    mixer_optimizer: Option<OptimizerState>,
    replay: ReplayBuffer,
    policy: AggregationPolicy,
    schedule: EpsilonSchedule,
    explore_rng: ChaCha8Rng,
    sample_rng: ChaCha8Rng,
    env_rng: ChaCha8Rng,
    eval_seeds: Vec<u64>,
    eval_optima: Vec<f64>,
    env_step: u64,
    train_step: u64,
    round: u64,
    last_weights: Option<Vec<f64>>,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let layout_seed = derive_seed(config.seed, Stream::Layout);
        let env = Env::from_name(&config.env, layout_seed)?;
        let spec = env.spec();
        let arch = agent_architecture(&spec, config.hidden_dim, config.activation)?;

        let mut init_rng = stream_rng(config.seed, Stream::Init);
        let agent_init = init_network(&arch, config.orthogonal_init, &mut init_rng)?;
        let learners = (0..spec.n_agents)
            .map(|i| AgentLearner::new(i, agent_init.clone(), config.reward_buffer_size))
            .collect();
        let mixer = match config.algo {
            Algorithm::Vdn => Mixer::Vdn {
                n_agents: spec.n_agents,
            },
            Algorithm::Qmix => Mixer::Qmix(MixerNetwork::new(
                spec.n_agents,
                spec.state_dim,
                config.mixing_dim,
                config.hypernet_dim.unwrap_or(spec.state_dim),
                config.orthogonal_init,
                &mut init_rng,
            )?),
        };
        let mixer_optimizer = mixer.params().map(OptimizerState::new);

        let mut eval_rng = stream_rng(config.seed, Stream::EvalEnv);
        let eval_seeds: Vec<u64> = (0..config.evaluate_episodes)
            .map(|_| eval_rng.random())
            .collect();
        let eval_optima = eval_seeds
            .iter()
            .map(|&s| env.optimal_return(s))
            .collect::<Result<_, _>>()?;

        Ok(Self {
            policy: config.aggregation_policy(arch.num_layers()),
            schedule: config.epsilon_schedule(),
            replay: ReplayBuffer::new(config.buffer_size),
            explore_rng: stream_rng(config.seed, Stream::Exploration),
            sample_rng: stream_rng(config.seed, Stream::Sampling),
            env_rng: stream_rng(config.seed, Stream::TrainEnv),
            target_mixer: mixer.clone(),
            mixer,
            mixer_optimizer,
            learners,
            arch,
            env,
            spec,
            layout_seed,
            config,
            eval_seeds,
            eval_optima,
            env_step: 0,
            train_step: 0,
            round: 0,
            last_weights: None,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn env_spec(&self) -> EnvSpec {
        self.spec
    }

    pub fn layout_seed(&self) -> u64 {
        self.layout_seed
    }

    pub fn learners(&self) -> &[AgentLearner] {
        &self.learners
    }

    pub fn mixer(&self) -> &Mixer {
        &self.mixer
    }

    pub fn target_mixer(&self) -> &Mixer {
        &self.target_mixer
    }

    pub fn replay(&self) -> &ReplayBuffer {
        &self.replay
    }

    pub fn env_step(&self) -> u64 {
        self.env_step
    }

    pub fn train_step(&self) -> u64 {
        self.train_step
    }

    pub fn rounds(&self) -> u64 {
        self.round
    }

    pub fn aggregation_policy(&self) -> &AggregationPolicy {
        &self.policy
    }

    pub fn epsilon(&self) -> f64 {
        self.schedule.value(self.env_step)
    }

    /// Overwrites every agent's online and target parameters. Meant for
    /// tests and for loading trained policies.
    pub fn set_agent_params(&mut self, params: &[ParameterSet]) -> Result<(), TrainError> {
        if params.len() != self.learners.len() {
            return Err(TrainError::Invalid(format!(
                "expected {} parameter sets, got {}",
                self.learners.len(),
                params.len()
            )));
        }
        for (l, p) in self.learners.iter_mut().zip(params) {
            l.params().check_same_shape(p)?;
            *l = AgentLearner::new(l.id(), p.clone(), self.config.reward_buffer_size);
        }
        Ok(())
    }

    pub fn manifest(&self) -> RunManifest {
        RunManifest {
            config: self.config.clone(),
            version: format!("v{}", env!("CARGO_PKG_VERSION")),
            layout_seed: self.layout_seed,
            personalized_cutoff: match self.config.sharing {
                AggregationMode::Pppps => self.policy.personalized_layers,
                _ => 0,
            },
            started_unix: unix_now(),
            finished_unix: None,
            artifacts: artifact_names(self.learners.len()),
        }
    }

    /// Plays one exploratory episode with every agent acting on its own
    /// observation, records per-agent rewards into the reward buffers and
    /// advances the env-step counter.
    pub fn rollout_episode(&mut self) -> Result<EpisodeRecord, TrainError> {
        let seed: u64 = self.env_rng.random();
        let mut res = self.env.reset(seed);
        let mut hidden = vec![self.arch.initial_hidden(); self.learners.len()];
        let mut ep = EpisodeRecord {
            observations: vec![res.observations.clone()],
            states: vec![res.state.clone()],
            avail_actions: vec![res.avail_actions.clone()],
            actions: Vec::new(),
            agent_rewards: Vec::new(),
            team_rewards: Vec::new(),
            terminated: false,
        };
        while !res.done {
            let epsilon = self.schedule.value(self.env_step);
            let mut actions = Vec::with_capacity(self.learners.len());
            for (i, learner) in self.learners.iter().enumerate() {
                let (q, h) = network_step(
                    &res.observations[i],
                    &self.arch,
                    learner.params(),
                    &hidden[i],
                )?;
                hidden[i] = h;
                actions.push(epsilon_greedy(
                    &q,
                    &res.avail_actions[i],
                    epsilon,
                    &mut self.explore_rng,
                )?);
            }
            res = self.env.step(&actions)?;
            for (learner, &r) in self.learners.iter_mut().zip(&res.agent_rewards) {
                learner.record_reward(r);
            }
            self.env_step += 1;
            ep.actions.push(actions);
            ep.agent_rewards.push(res.agent_rewards.clone());
            ep.team_rewards.push(res.team_reward);
            ep.observations.push(res.observations.clone());
            ep.states.push(res.state.clone());
            ep.avail_actions.push(res.avail_actions.clone());
        }
        ep.terminated = res.terminated;
        Ok(ep)
    }

    pub fn store_episode(&mut self, episode: EpisodeRecord) {
        self.replay.push(episode);
    }

    /// One optimization step on a sampled batch, or `None` while the buffer
    /// holds fewer than `batch_size` episodes.
    pub fn train_iteration(&mut self) -> Result<Option<f64>, TrainError> {
        let Some(batch) = self
            .replay
            .sample(self.config.batch_size, &mut self.sample_rng)
        else {
            return Ok(None);
        };

        let target_nets: Vec<AgentNet<'_>> = self
            .learners
            .iter()
            .map(|l| AgentNet {
                arch: &self.arch,
                params: l.target_params(),
            })
            .collect();
        let targets = td_targets(&batch, &target_nets, &self.target_mixer, self.config.gamma)?;
        let nets: Vec<AgentNet<'_>> = self
            .learners
            .iter()
            .map(|l| AgentNet {
                arch: &self.arch,
                params: l.params(),
            })
            .collect();
        let out = td_loss_and_grads(&batch, &nets, &self.mixer, &targets)?;
        if !out.loss.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                train_step: self.train_step,
                env_step: self.env_step,
            });
        }

        let clip = self.config.grad_clip.then_some(self.config.grad_clip_norm);
        let lr = self.config.learning_rate;
        for (learner, grads) in self.learners.iter_mut().zip(out.agent_grads) {
            learner.apply_gradients(grads, lr, clip)?;
        }
        if let (Some(mut grads), Some(params), Some(opt)) = (
            out.mixer_grads,
            self.mixer.params_mut(),
            self.mixer_optimizer.as_mut(),
        ) {
            if let Some(m) = clip {
                clip_global_norm(&mut grads, m);
            }
            adam_update(params, &grads, opt, lr)?;
        }
        self.train_step += 1;
        Ok(Some(out.loss))
    }

    /// Copies online networks into the targets when the training step is a
    /// multiple of the target update frequency. Returns whether it did.
    pub fn update_targets(&mut self) -> bool {
        if self.train_step % self.config.target_update_freq != 0 {
            return false;
        }
        for l in &mut self.learners {
            l.sync_target();
        }
        self.target_mixer.clone_from(&self.mixer);
        true
    }

    /// Aggregation barrier. Does nothing unless sharing is enabled and the
    /// current training step is due.
    pub fn federation_round(&mut self) -> Result<Option<RoundAudit>, TrainError> {
        if self.policy.mode == AggregationMode::None
            || !should_aggregate(self.train_step, self.policy.interval)
        {
            return Ok(None);
        }
        let sums: Vec<f64> = self.learners.iter().map(|l| l.rewards().sum()).collect();
        let weights = aggregation_weights(self.policy.mode, &sums, self.policy.weight_floor)?;
        let snapshot: Vec<&ParameterSet> = self.learners.iter().map(|l| l.params()).collect();
        let mut global = aggregate(
            &snapshot,
            &weights,
            self.policy.effective_personalized_layers(),
        )?;
        self.round += 1;
        global.round = self.round;
        let distances = snapshot
            .iter()
            .map(|p| global.distance(p))
            .collect::<Result<Vec<_>, _>>()?;
        for l in &mut self.learners {
            apply_global(l.params_mut(), &global, self.policy.blend_tau)?;
        }
        let audit = RoundAudit {
            round: self.round,
            train_step: self.train_step,
            mode: self.policy.mode,
            weights: weights.clone(),
            distances,
        };
        self.last_weights = Some(weights);
        Ok(Some(audit))
    }

    /// Greedy rollouts on the evaluation seeds.
    pub fn evaluate(&self) -> Result<EvalResult, TrainError> {
        let mut total = 0.0;
        let mut successes = 0usize;
        for (&seed, &optimum) in self.eval_seeds.iter().zip(&self.eval_optima) {
            let ret = self.greedy_return(seed)?;
            total += ret;
            if ret >= optimum - 1e-9 {
                successes += 1;
            }
        }
        let n = self.eval_seeds.len() as f64;
        Ok(EvalResult {
            mean_return: total / n,
            success_rate: successes as f64 / n,
        })
    }

    /// Undiscounted team return of the greedy joint policy from `reset(seed)`
    /// on a fresh environment copy.
    pub fn greedy_return(&self, seed: u64) -> Result<f64, TrainError> {
        let mut env = self.env.clone();
        let mut res = env.reset(seed);
        let mut hidden = vec![self.arch.initial_hidden(); self.learners.len()];
        let mut ret = 0.0;
        while !res.done {
            let mut actions = Vec::with_capacity(self.learners.len());
            for (i, learner) in self.learners.iter().enumerate() {
                let (q, h) = network_step(
                    &res.observations[i],
                    &self.arch,
                    learner.params(),
                    &hidden[i],
                )?;
                hidden[i] = h;
                actions.push(greedy_action(&q, &res.avail_actions[i])?);
            }
            res = env.step(&actions)?;
            ret += res.team_reward;
        }
        Ok(ret)
    }

    fn metrics_row(&self, eval: EvalResult, losses: &[f64]) -> MetricsRow {
        MetricsRow {
            env_step: self.env_step,
            train_step: self.train_step,
            eval_return_mean: eval.mean_return,
            eval_success_rate: eval.success_rate,
            td_loss: (!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64),
            epsilon: self.epsilon(),
            agg_round: self.round,
            agg_weights: self
                .last_weights
                .as_ref()
                .map(|w| {
                    w.iter()
                        .map(|x| format!("{x:.12}"))
                        .collect::<Vec<_>>()
                        .join(";")
                })
                .unwrap_or_default(),
        }
    }

    fn write_checkpoints(&self, out: &RunOutput) -> Result<(), TrainError> {
        let empty = ParameterSet::new();
        out.checkpoints(
            self.learners.iter().map(|l| l.params()),
            self.mixer.params().unwrap_or(&empty),
        )
    }

    /// Full training loop writing into `config.out_dir`.
    pub fn run(mut self) -> Result<RunSummary, TrainError> {
        let mut manifest = self.manifest();
        let mut out = RunOutput::create(&self.config.out_dir, &manifest)?;
        let mut summary = RunSummary {
            rows: Vec::new(),
            audits: Vec::new(),
            env_steps: 0,
            train_steps: 0,
        };
        let mut last_eval = 0u64;
        let mut losses = Vec::new();
        while self.env_step < self.config.max_train_steps {
            let episode = self.rollout_episode()?;
            self.store_episode(episode);
            if let Some(loss) = self.train_iteration()? {
                losses.push(loss);
                self.update_targets();
                if let Some(audit) = self.federation_round()? {
                    out.audit(&audit)?;
                    summary.audits.push(audit);
                }
            }
            if self.env_step - last_eval >= self.config.evaluate_freq {
                let row = self.metrics_row(self.evaluate()?, &losses);
                out.row(&row)?;
                self.write_checkpoints(&out)?;
                summary.rows.push(row);
                last_eval = self.env_step;
                losses.clear();
            }
        }
        if self.env_step > last_eval {
            let row = self.metrics_row(self.evaluate()?, &losses);
            out.row(&row)?;
            summary.rows.push(row);
        }
        self.write_checkpoints(&out)?;
        manifest.finished_unix = Some(unix_now());
        out.write_manifest(&manifest)?;
        summary.env_steps = self.env_step;
        summary.train_steps = self.train_step;
        Ok(summary)
    }
}

/// Files every run directory contains.
pub fn artifact_names(n_agents: usize) -> Vec<String> {
    let mut names = vec![
        super::output::MANIFEST_FILE.to_string(),
        super::output::METRICS_FILE.to_string(),
        super::output::AUDIT_FILE.to_string(),
        super::output::MIXER_CHECKPOINT.to_string(),
    ];
    names.extend((0..n_agents).map(super::output::agent_checkpoint_name));
    names
}

/// Validates `config`, trains, and writes the run directory.
pub fn run(config: &TrainConfig) -> Result<RunSummary, TrainError> {
    Trainer::new(config.clone())?.run()
}
