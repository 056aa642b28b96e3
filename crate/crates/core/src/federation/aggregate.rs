use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use super::FederationError;
use crate::nn::{LayerParams, ParameterSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregationMode {
    /// Independent learners, no sharing.
    None,
    /// Uniform averaging.
    Apps,
    /// Reward-scaled averaging.
    Rspps,
    /// Reward-scaled averaging of non-personalized layers.
    Pppps,
}

impl AggregationMode {
    pub const ALL: [AggregationMode; 4] = [
        AggregationMode::None,
        AggregationMode::Apps,
        AggregationMode::Rspps,
        AggregationMode::Pppps,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AggregationMode::None => "none",
            AggregationMode::Apps => "apps",
            AggregationMode::Rspps => "rspps",
            AggregationMode::Pppps => "pppps",
        }
    }
}

impl fmt::Display for AggregationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AggregationMode {
    type Err = FederationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| FederationError::InvalidPolicy(format!("unknown sharing mode `{s}`")))
    }
}

/// When and how agent networks are aggregated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregationPolicy {
    pub mode: AggregationMode,
    /// Training steps between rounds.
    pub interval: u64,
    /// Blend factor applied when broadcasting the global model, in (0, 1].
    pub blend_tau: f64,
    /// Number of lowest-indexed layers kept local under `pppps`.
    pub personalized_layers: usize,
    /// Added after shifting reward sums so every agent keeps a positive weight.
    pub weight_floor: f64,
}

impl Default for AggregationPolicy {
    fn default() -> Self {
        Self {
            mode: AggregationMode::None,
            interval: 300,
            blend_tau: 0.05,
            personalized_layers: 4,
            weight_floor: 1e-6,
        }
    }
}

impl AggregationPolicy {
    pub fn validate(&self) -> Result<(), FederationError> {
        if self.interval == 0 {
            return Err(FederationError::InvalidPolicy(
                "interval must be ≥ 1".into(),
            ));
        }
        if !(self.blend_tau > 0.0 && self.blend_tau <= 1.0) {
            return Err(FederationError::InvalidPolicy(format!(
                "blend factor {} outside (0, 1]",
                self.blend_tau
            )));
        }
        if self.mode == AggregationMode::Pppps && self.personalized_layers == 0 {
            return Err(FederationError::InvalidPolicy(
                "pppps needs at least one personalized layer".into(),
            ));
        }
        if !(self.weight_floor > 0.0 && self.weight_floor.is_finite()) {
            return Err(FederationError::InvalidPolicy(
                "weight floor must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Layers excluded from aggregation in this policy's mode.
    pub fn effective_personalized_layers(&self) -> usize {
        if self.mode == AggregationMode::Pppps {
            self.personalized_layers
        } else {
            0
        }
    }
}

/// Aggregation weights on the probability simplex.
///
/// Uniform for `none`/`apps`. For the reward-scaled modes, `R_i / Σ R_j` when
/// every sum is positive; otherwise sums are shifted by their minimum and
/// offset by `weight_floor` before normalizing. Equal sums always give
/// uniform weights.
pub fn aggregation_weights(
    mode: AggregationMode,
    reward_sums: &[f64],
    weight_floor: f64,
) -> Result<Vec<f64>, FederationError> {
    let n = reward_sums.len();
    if n == 0 {
        return Err(FederationError::NoAgents);
    }
    let uniform = vec![1.0 / n as f64; n];
    match mode {
        AggregationMode::None | AggregationMode::Apps => Ok(uniform),
        AggregationMode::Rspps | AggregationMode::Pppps => {
            if reward_sums.iter().any(|r| !r.is_finite()) {
                return Err(FederationError::InvalidPolicy(
                    "non-finite reward sum".into(),
                ));
            }
            let min = reward_sums.iter().copied().fold(f64::INFINITY, f64::min);
            let max = reward_sums
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            if min == max {
                return Ok(uniform);
            }
            let scores: Vec<f64> = if min > 0.0 {
                reward_sums.to_vec()
            } else {
                reward_sums.iter().map(|r| r - min + weight_floor).collect()
            };
            let total: f64 = scores.iter().sum();
            Ok(scores.iter().map(|s| s / total).collect())
        }
    }
}

/// Aggregated parameters. Personalized layers are absent and never broadcast.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalModel {
    pub layers: BTreeMap<usize, Option<LayerParams>>,
    pub round: u64,
}

impl GlobalModel {
    pub fn layer(&self, layer_id: usize) -> Option<&LayerParams> {
        self.layers.get(&layer_id).and_then(Option::as_ref)
    }

    pub fn aggregated_layer_ids(&self) -> Vec<usize> {
        self.layers
            .iter()
            .filter_map(|(&id, l)| l.as_ref().map(|_| id))
            .collect()
    }

    /// L2 distance between `local` and this model over the aggregated layers.
    pub fn distance(&self, local: &ParameterSet) -> Result<f64, FederationError> {
        let mut sum = 0.0;
        for (&id, layer) in &self.layers {
            let Some(layer) = layer else { continue };
            let local_layer = local
                .layer(id)
                .ok_or(FederationError::LayerMismatch { layer_id: id })?;
            crate::nn::check_layer_shape(id, layer, local_layer)
                .map_err(|_| FederationError::LayerMismatch { layer_id: id })?;
            for (name, g) in layer {
                for (a, b) in g.data().iter().zip(local_layer[name].data()) {
                    sum += (a - b) * (a - b);
                }
            }
        }
        Ok(sum.sqrt())
    }
}

/// Weighted layer-wise average. Layers with id `< personalized_layers` are
/// left out of the result.
pub fn aggregate(
    params_list: &[&ParameterSet],
    weights: &[f64],
    personalized_layers: usize,
) -> Result<GlobalModel, FederationError> {
    let first = *params_list.first().ok_or(FederationError::NoAgents)?;
    if weights.len() != params_list.len() {
        return Err(FederationError::WeightCount {
            expected: params_list.len(),
            actual: weights.len(),
        });
    }
    for p in &params_list[1..] {
        if let Err(e) = first.check_same_shape(p) {
            let layer_id = match e {
                crate::nn::NnError::ShapeMismatch { layer_id, .. } => layer_id,
                _ => 0,
            };
            return Err(FederationError::LayerMismatch { layer_id });
        }
    }

    let mut layers = BTreeMap::new();
    for (layer_id, layer) in first.layers() {
        if layer_id < personalized_layers {
            layers.insert(layer_id, None);
            continue;
        }
        let mut acc: LayerParams = layer.clone();
        for (name, t) in acc.iter_mut() {
            for v in t.data_mut() {
                *v *= weights[0];
            }
            for (p, &w) in params_list.iter().zip(weights).skip(1) {
                let src = p.tensor(layer_id, name)?;
                for (a, b) in t.data_mut().iter_mut().zip(src.data()) {
                    *a += w * b;
                }
            }
        }
        layers.insert(layer_id, Some(acc));
    }
    Ok(GlobalModel { layers, round: 0 })
}

/// `local ← (1 − τ) local + τ global` on aggregated layers; personalized layers
/// are not touched.
pub fn apply_global(
    local: &mut ParameterSet,
    global: &GlobalModel,
    blend_tau: f64,
) -> Result<(), FederationError> {
    if !(blend_tau > 0.0 && blend_tau <= 1.0) {
        return Err(FederationError::InvalidPolicy(format!(
            "blend factor {blend_tau} outside (0, 1]"
        )));
    }
    for (&id, layer) in &global.layers {
        let Some(layer) = layer else { continue };
        let local_layer = local
            .layer_mut(id)
            .ok_or(FederationError::LayerMismatch { layer_id: id })?;
        crate::nn::check_layer_shape(id, layer, local_layer)
            .map_err(|_| FederationError::LayerMismatch { layer_id: id })?;
        for (name, g) in layer {
            let t = local_layer.get_mut(name).expect("shape checked");
            for (l, &gv) in t.data_mut().iter_mut().zip(g.data()) {
                *l = (1.0 - blend_tau) * *l + blend_tau * gv;
            }
        }
    }
    Ok(())
}

/// Aggregation is due on every positive multiple of `interval`.
pub fn should_aggregate(train_step: u64, interval: u64) -> bool {
    interval > 0 && train_step > 0 && train_step % interval == 0
}

/// One line of the aggregation audit log.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundAudit {
    pub round: u64,
    pub train_step: u64,
    pub mode: AggregationMode,
    pub weights: Vec<f64>,
    /// L2 distance of each agent to the global model, before blending.
    pub distances: Vec<f64>,
}

impl RoundAudit {
    pub fn weights_joined(&self) -> String {
        self.weights
            .iter()
            .map(|w| format!("{w:.12}"))
            .collect::<Vec<_>>()
            .join(";")
    }
}

impl fmt::Display for RoundAudit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dist = self
            .distances
            .iter()
            .map(|d| format!("{d:.12}"))
            .collect::<Vec<_>>()
            .join(";");
        write!(
            f,
            "round={} train_step={} mode={} weights={} l2_to_global={}",
            self.round,
            self.train_step,
            self.mode,
            self.weights_joined(),
            dist
        )
    }
}
