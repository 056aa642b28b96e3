use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::factorization::EpsilonSchedule;
use crate::federation::{AggregationMode, AggregationPolicy};
use crate::nn::Activation;

/// Value-factorization head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Vdn,
    Qmix,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Vdn => "vdn",
            Algorithm::Qmix => "qmix",
        })
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "vdn" => Ok(Algorithm::Vdn),
            "qmix" => Ok(Algorithm::Qmix),
            _ => Err(format!("expected vdn or qmix, got `{s}`")),
        }
    }
}

/// A rejected configuration entry.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("config key `{key}`: {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    fn new(key: &str, message: impl Into<String>) -> Self {
        Self {
            key: key.to_string(),
            message: message.into(),
        }
    }
}

/// Every knob of a training run. `Default` gives the reference
/// hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Environment steps to train for.
    pub max_train_steps: u64,
    /// Environment steps between evaluations.
    pub evaluate_freq: u64,
    pub evaluate_episodes: usize,
    /// Training steps between hard target-network copies.
    pub target_update_freq: u64,
    pub algo: Algorithm,
    pub epsilon_decay_steps: u64,
    pub epsilon_max: f64,
    pub epsilon_min: f64,
    pub buffer_size: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Discount factor.
    pub gamma: f64,
    pub mixer_hidden_layers: usize,
    pub mixing_dim: usize,
    /// Hidden width of the second-layer bias hypernetwork; `None` means the
    /// state dimension.
    pub hypernet_dim: Option<usize>,
    pub optimizer: String,
    pub grad_clip: bool,
    pub grad_clip_norm: f64,
    pub activation: Activation,
    pub orthogonal_init: bool,
    pub lr_decay: bool,
    pub hidden_dim: usize,
    pub sharing: AggregationMode,
    pub soft_update: f64,
    pub reward_buffer_size: usize,
    pub aggregation_freq: u64,
    pub personalized_layers: usize,
    pub weight_floor: f64,
    pub env: String,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_train_steps: 1_000_000,
            evaluate_freq: 5000,
            evaluate_episodes: 32,
            target_update_freq: 200,
            algo: Algorithm::Qmix,
            epsilon_decay_steps: 50_000,
            epsilon_max: 1.0,
            epsilon_min: 0.05,
            buffer_size: 5000,
            batch_size: 96,
            learning_rate: 5e-4,
            gamma: 0.99,
            mixer_hidden_layers: 1,
            mixing_dim: 64,
            hypernet_dim: None,
            optimizer: "adam".to_string(),
            grad_clip: true,
            grad_clip_norm: 10.0,
            activation: Activation::Relu,
            orthogonal_init: true,
            lr_decay: false,
            hidden_dim: 64,
            sharing: AggregationMode::None,
            soft_update: 0.05,
            reward_buffer_size: 96,
            aggregation_freq: 300,
            personalized_layers: 4,
            weight_floor: 1e-6,
            env: "two_step".to_string(),
            seed: 0,
            out_dir: PathBuf::from("fedmix_out"),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| ConfigError::new(key, format!("cannot parse `{value}`: {e}")))
}

fn activation_name(a: Activation) -> &'static str {
    match a {
        Activation::Linear => "linear",
        Activation::Relu => "relu",
        Activation::Tanh => "tanh",
    }
}

impl TrainConfig {
    /// All keys accepted by [`TrainConfig::set`], in manifest order.
    pub const KEYS: [&'static str; 31] = [
        "max_train_steps",
        "evaluate_freq",
        "evaluate_episodes",
        "target_update_freq",
        "algo",
        "epsilon_decay_steps",
        "epsilon_max",
        "epsilon_min",
        "buffer_size",
        "batch_size",
        "learning_rate",
        "gamma",
        "mixer_hidden_layers",
        "mixing_dim",
        "hypernet_dim",
        "optimizer",
        "grad_clip",
        "grad_clip_norm",
        "activation",
        "orthogonal_init",
        "lr_decay",
        "hidden_dim",
        "sharing",
        "soft_update",
        "reward_buffer_size",
        "aggregation_freq",
        "personalized_layers",
        "weight_floor",
        "env",
        "seed",
        "out_dir",
    ];

    /// Sets one field from its text form. Range checks happen in
    /// [`TrainConfig::validate`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        match key {
            "max_train_steps" => self.max_train_steps = parse_count(key, value)?,
            "evaluate_freq" => self.evaluate_freq = parse_count(key, value)?,
            "evaluate_episodes" => self.evaluate_episodes = parse(key, value)?,
            "target_update_freq" => self.target_update_freq = parse(key, value)?,
            "algo" => self.algo = parse(key, value)?,
            "epsilon_decay_steps" => self.epsilon_decay_steps = parse_count(key, value)?,
            "epsilon_max" => self.epsilon_max = parse(key, value)?,
            "epsilon_min" => self.epsilon_min = parse(key, value)?,
            "buffer_size" => self.buffer_size = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "gamma" => self.gamma = parse(key, value)?,
            "mixer_hidden_layers" => self.mixer_hidden_layers = parse(key, value)?,
            "mixing_dim" => self.mixing_dim = parse(key, value)?,
            "hypernet_dim" => {
                self.hypernet_dim = match value {
                    "state" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "optimizer" => self.optimizer = value.to_string(),
            "grad_clip" => self.grad_clip = parse(key, value)?,
            "grad_clip_norm" => self.grad_clip_norm = parse(key, value)?,
            "activation" => {
                self.activation = match value {
                    "relu" => Activation::Relu,
                    "tanh" => Activation::Tanh,
                    _ => {
                        return Err(ConfigError::new(
                            key,
                            format!("expected relu or tanh, got `{value}`"),
                        ))
                    }
                }
            }
            "orthogonal_init" => self.orthogonal_init = parse(key, value)?,
            "lr_decay" => self.lr_decay = parse(key, value)?,
            "hidden_dim" => self.hidden_dim = parse(key, value)?,
            "sharing" => self.sharing = parse(key, value)?,
            "soft_update" => self.soft_update = parse(key, value)?,
            "reward_buffer_size" => self.reward_buffer_size = parse(key, value)?,
            "aggregation_freq" => self.aggregation_freq = parse(key, value)?,
            "personalized_layers" => self.personalized_layers = parse(key, value)?,
            "weight_floor" => self.weight_floor = parse(key, value)?,
            "env" => self.env = value.to_string(),
            "seed" => self.seed = parse(key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            _ => return Err(ConfigError::new(key, "unknown key")),
        }
        Ok(())
    }

    /// Every field as `(key, value)` text; feeding these back through
    /// [`TrainConfig::set`] reproduces the config exactly.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("max_train_steps", self.max_train_steps.to_string()),
            ("evaluate_freq", self.evaluate_freq.to_string()),
            ("evaluate_episodes", self.evaluate_episodes.to_string()),
            ("target_update_freq", self.target_update_freq.to_string()),
            ("algo", self.algo.to_string()),
            ("epsilon_decay_steps", self.epsilon_decay_steps.to_string()),
            ("epsilon_max", self.epsilon_max.to_string()),
            ("epsilon_min", self.epsilon_min.to_string()),
            ("buffer_size", self.buffer_size.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("gamma", self.gamma.to_string()),
            ("mixer_hidden_layers", self.mixer_hidden_layers.to_string()),
            ("mixing_dim", self.mixing_dim.to_string()),
            (
                "hypernet_dim",
                self.hypernet_dim
                    .map_or("state".to_string(), |d| d.to_string()),
            ),
            ("optimizer", self.optimizer.clone()),
            ("grad_clip", self.grad_clip.to_string()),
            ("grad_clip_norm", self.grad_clip_norm.to_string()),
            ("activation", activation_name(self.activation).to_string()),
            ("orthogonal_init", self.orthogonal_init.to_string()),
            ("lr_decay", self.lr_decay.to_string()),
            ("hidden_dim", self.hidden_dim.to_string()),
            ("sharing", self.sharing.to_string()),
            ("soft_update", self.soft_update.to_string()),
            ("reward_buffer_size", self.reward_buffer_size.to_string()),
            ("aggregation_freq", self.aggregation_freq.to_string()),
            ("personalized_layers", self.personalized_layers.to_string()),
            ("weight_floor", self.weight_floor.to_string()),
            ("env", self.env.clone()),
            ("seed", self.seed.to_string()),
            ("out_dir", self.out_dir.display().to_string()),
        ]
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let check = |ok: bool, key: &str, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::new(key, msg))
            }
        };
        check(self.evaluate_freq >= 1, "evaluate_freq", "must be ≥ 1")?;
        check(
            self.evaluate_episodes >= 1,
            "evaluate_episodes",
            "must be ≥ 1",
        )?;
        check(
            self.target_update_freq >= 1,
            "target_update_freq",
            "must be ≥ 1",
        )?;
        check(
            (0.0..=1.0).contains(&self.epsilon_max),
            "epsilon_max",
            "must lie in [0, 1]",
        )?;
        check(
            (0.0..=1.0).contains(&self.epsilon_min) && self.epsilon_min <= self.epsilon_max,
            "epsilon_min",
            "must lie in [0, epsilon_max]",
        )?;
        check(self.batch_size >= 1, "batch_size", "must be ≥ 1")?;
        check(
            self.buffer_size >= self.batch_size,
            "buffer_size",
            "must hold at least one batch",
        )?;
        check(
            self.learning_rate > 0.0 && self.learning_rate.is_finite(),
            "learning_rate",
            "must be positive",
        )?;
        check(
            (0.0..=1.0).contains(&self.gamma),
            "gamma",
            "must lie in [0, 1]",
        )?;
        check(
            self.mixer_hidden_layers == 1,
            "mixer_hidden_layers",
            "only one mixing layer is supported",
        )?;
        check(self.mixing_dim >= 1, "mixing_dim", "must be ≥ 1")?;
        check(self.hypernet_dim != Some(0), "hypernet_dim", "must be ≥ 1")?;
        check(
            self.optimizer == "adam",
            "optimizer",
            "only adam is supported",
        )?;
        check(
            self.grad_clip_norm > 0.0 && self.grad_clip_norm.is_finite(),
            "grad_clip_norm",
            "must be positive",
        )?;
        check(
            !self.lr_decay,
            "lr_decay",
            "learning-rate decay is not supported",
        )?;
        check(self.hidden_dim >= 1, "hidden_dim", "must be ≥ 1")?;
        check(
            self.soft_update > 0.0 && self.soft_update <= 1.0,
            "soft_update",
            "must lie in (0, 1]",
        )?;
        check(
            self.reward_buffer_size >= 1,
            "reward_buffer_size",
            "must be ≥ 1",
        )?;
        check(
            self.aggregation_freq >= 1,
            "aggregation_freq",
            "must be ≥ 1",
        )?;
        check(
            self.sharing != AggregationMode::Pppps || self.personalized_layers >= 1,
            "personalized_layers",
            "pppps needs at least one personalized layer",
        )?;
        check(
            self.weight_floor > 0.0 && self.weight_floor.is_finite(),
            "weight_floor",
            "must be positive",
        )?;
        check(
            crate::envs::Env::NAMES.contains(&self.env.as_str()),
            "env",
            "expected two_step, harvest or harvest_asym",
        )?;
        Ok(())
    }

    pub fn epsilon_schedule(&self) -> EpsilonSchedule {
        EpsilonSchedule {
            start: self.epsilon_max,
            end: self.epsilon_min,
            decay_steps: self.epsilon_decay_steps,
        }
    }

    /// Aggregation policy with the personalized cutoff clamped so at least
    /// one layer of a `num_layers`-deep agent network is shared.
    pub fn aggregation_policy(&self, num_layers: usize) -> AggregationPolicy {
        AggregationPolicy {
            mode: self.sharing,
            interval: self.aggregation_freq,
            blend_tau: self.soft_update,
            personalized_layers: self
                .personalized_layers
                .min(num_layers.saturating_sub(1))
                .max(1),
            weight_floor: self.weight_floor,
        }
    }
}

/// Integer counts, also accepting scientific notation such as `1e6`.
fn parse_count(key: &str, value: &str) -> Result<u64, ConfigError> {
    if let Ok(v) = value.parse::<u64>() {
        return Ok(v);
    }
    match value.parse::<f64>() {
        Ok(f) if f >= 0.0 && f.fract() == 0.0 && f <= u64::MAX as f64 => Ok(f as u64),
        _ => Err(ConfigError::new(
            key,
            format!("cannot parse `{value}` as a count"),
        )),
    }
}
