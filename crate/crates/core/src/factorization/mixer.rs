use rand::Rng;

use super::FactorizationError;
use crate::nn::{
    dense_backward, dense_backward_params, dense_forward_cached, Activation, DenseCache,
    LayerParams, LayerSpec, ParameterSet,
};

/// `Σ_i q_i`.
pub fn vdn_total(q_chosen: &[f64]) -> Result<f64, FactorizationError> {
    if q_chosen.is_empty() {
        return Err(FactorizationError::Empty("agent Q-values"));
    }
    Ok(q_chosen.iter().sum())
}

const HYPER_W1: usize = 0;
const HYPER_B1: usize = 1;
const HYPER_W2: usize = 2;
const HYPER_B2_HIDDEN: usize = 3;
const HYPER_B2_OUT: usize = 4;

/// State-conditioned monotonic mixer.
///
/// ```text
/// Q_tot = |w2(s)|ᵀ · elu(|W1(s)| q + b1(s)) + b2(s)
/// ```
///
/// `W1`, `b1` and `w2` are single dense layers of the global state; `b2` is a
/// two-layer head (relu hidden of width `hypernet_dim`). Taking absolute
/// values of the generated mixing weights makes `∂Q_tot/∂q_i ≥ 0` hold
/// by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct MixerNetwork {
    n_agents: usize,
    state_dim: usize,
    mixing_dim: usize,
    hypernet_dim: usize,
    specs: [LayerSpec; 5],
    params: ParameterSet,
}

/// Intermediate values of one mixer evaluation.
#[derive(Debug, Clone)]
pub struct MixerTrace {
    q: Vec<f64>,
    w1: DenseCache,
    b1: DenseCache,
    w2: DenseCache,
    b2_hidden: DenseCache,
    b2_out: DenseCache,
    pre: Vec<f64>,
    hidden: Vec<f64>,
}

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

fn elu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl MixerNetwork {
    fn layer_specs(
        n_agents: usize,
        state_dim: usize,
        mixing_dim: usize,
        hypernet_dim: usize,
    ) -> [LayerSpec; 5] {
        [
            LayerSpec::dense(
                HYPER_W1,
                state_dim,
                n_agents * mixing_dim,
                Activation::Linear,
            ),
            LayerSpec::dense(HYPER_B1, state_dim, mixing_dim, Activation::Linear),
            LayerSpec::dense(HYPER_W2, state_dim, mixing_dim, Activation::Linear),
            LayerSpec::dense(HYPER_B2_HIDDEN, state_dim, hypernet_dim, Activation::Relu),
            LayerSpec::dense(HYPER_B2_OUT, hypernet_dim, 1, Activation::Linear),
        ]
    }

    /// All hypernetwork parameters zero.
    pub fn zeros(
        n_agents: usize,
        state_dim: usize,
        mixing_dim: usize,
        hypernet_dim: usize,
    ) -> Result<Self, FactorizationError> {
        if n_agents == 0 || state_dim == 0 || mixing_dim == 0 || hypernet_dim == 0 {
            return Err(FactorizationError::InvalidParameter(
                "mixer dimensions must be positive".into(),
            ));
        }
        let specs = Self::layer_specs(n_agents, state_dim, mixing_dim, hypernet_dim);
        let mut params = ParameterSet::new();
        for spec in &specs {
            for (name, shape) in spec.tensor_shapes() {
                params.insert(spec.layer_id, name, crate::nn::Tensor::zeros(&shape));
            }
        }
        Ok(Self {
            n_agents,
            state_dim,
            mixing_dim,
            hypernet_dim,
            specs,
            params,
        })
    }

    /// Randomly initialized hypernetworks (biases zero).
    pub fn new<R: Rng + ?Sized>(
        n_agents: usize,
        state_dim: usize,
        mixing_dim: usize,
        hypernet_dim: usize,
        orthogonal: bool,
        rng: &mut R,
    ) -> Result<Self, FactorizationError> {
        let mut m = Self::zeros(n_agents, state_dim, mixing_dim, hypernet_dim)?;
        for spec in m.specs {
            let shape = [spec.out_dim, spec.in_dim];
            let t = crate::nn::random_matrix(&shape, orthogonal, rng)?;
            m.params.insert(spec.layer_id, "weight", t);
        }
        Ok(m)
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn mixing_dim(&self) -> usize {
        self.mixing_dim
    }

    pub fn hypernet_dim(&self) -> usize {
        self.hypernet_dim
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet {
        &mut self.params
    }

    /// Replaces the parameters; shapes must match.
    pub fn set_params(&mut self, params: ParameterSet) -> Result<(), FactorizationError> {
        self.params.check_same_shape(&params)?;
        self.params = params;
        Ok(())
    }

    fn check_inputs(&self, q: &[f64], state: &[f64]) -> Result<(), FactorizationError> {
        if q.len() != self.n_agents {
            return Err(FactorizationError::Dimension {
                what: "agent Q-values",
                expected: self.n_agents,
                actual: q.len(),
            });
        }
        if state.len() != self.state_dim {
            return Err(FactorizationError::Dimension {
                what: "state",
                expected: self.state_dim,
                actual: state.len(),
            });
        }
        Ok(())
    }

    pub fn forward_traced(
        &self,
        q: &[f64],
        state: &[f64],
    ) -> Result<(f64, MixerTrace), FactorizationError> {
        self.check_inputs(q, state)?;
        let layer = |id: usize| self.params.layer(id).expect("mixer layer present");
        let w1 = dense_forward_cached(state, &self.specs[HYPER_W1], layer(HYPER_W1))?;
        let b1 = dense_forward_cached(state, &self.specs[HYPER_B1], layer(HYPER_B1))?;
        let w2 = dense_forward_cached(state, &self.specs[HYPER_W2], layer(HYPER_W2))?;
        let b2_hidden =
            dense_forward_cached(state, &self.specs[HYPER_B2_HIDDEN], layer(HYPER_B2_HIDDEN))?;
        let b2_out = dense_forward_cached(
            &b2_hidden.output,
            &self.specs[HYPER_B2_OUT],
            layer(HYPER_B2_OUT),
        )?;

        let m = self.mixing_dim;
        let mut pre = b1.output.clone();
        for (i, &qi) in q.iter().enumerate() {
            let row = &w1.output[i * m..(i + 1) * m];
            for (p, &w) in pre.iter_mut().zip(row) {
                *p += w.abs() * qi;
            }
        }
        let hidden: Vec<f64> = pre.iter().map(|&x| elu(x)).collect();
        let total = hidden
            .iter()
            .zip(&w2.output)
            .map(|(h, w)| h * w.abs())
            .sum::<f64>()
            + b2_out.output[0];
        Ok((
            total,
            MixerTrace {
                q: q.to_vec(),
                w1,
                b1,
                w2,
                b2_hidden,
                b2_out,
                pre,
                hidden,
            },
        ))
    }

    pub fn total(&self, q: &[f64], state: &[f64]) -> Result<f64, FactorizationError> {
        Ok(self.forward_traced(q, state)?.0)
    }

    /// Accumulates hypernetwork gradients of `d_total · Q_tot` into `grads`
    /// and returns `dQ_tot/dq · d_total`.
    pub fn backward(
        &self,
        trace: &MixerTrace,
        d_total: f64,
        grads: &mut ParameterSet,
    ) -> Result<Vec<f64>, FactorizationError> {
        let m = self.mixing_dim;
        let w2 = &trace.w2.output;
        let w1 = &trace.w1.output;

        let d_w2: Vec<f64> = (0..m)
            .map(|k| d_total * trace.hidden[k] * sign(w2[k]))
            .collect();
        let d_pre: Vec<f64> = (0..m)
            .map(|k| d_total * w2[k].abs() * elu_grad(trace.pre[k]))
            .collect();
        let mut d_w1 = vec![0.0; self.n_agents * m];
        let mut dq = vec![0.0; self.n_agents];
        for i in 0..self.n_agents {
            for k in 0..m {
                let w = w1[i * m + k];
                d_w1[i * m + k] = d_pre[k] * trace.q[i] * sign(w);
                dq[i] += d_pre[k] * w.abs();
            }
        }

        // the state is an input, so only the top of the bias chain needs an
        // input gradient
        dense_backward_params(
            &trace.w1,
            &d_w1,
            &self.specs[HYPER_W1],
            grad_layer(grads, HYPER_W1)?,
        )?;
        dense_backward_params(
            &trace.b1,
            &d_pre,
            &self.specs[HYPER_B1],
            grad_layer(grads, HYPER_B1)?,
        )?;
        dense_backward_params(
            &trace.w2,
            &d_w2,
            &self.specs[HYPER_W2],
            grad_layer(grads, HYPER_W2)?,
        )?;
        let lp = self
            .params
            .layer(HYPER_B2_OUT)
            .expect("mixer layer present");
        let d_b2_hidden = dense_backward(
            &trace.b2_out,
            &[d_total],
            &self.specs[HYPER_B2_OUT],
            lp,
            grad_layer(grads, HYPER_B2_OUT)?,
        )?;
        dense_backward_params(
            &trace.b2_hidden,
            &d_b2_hidden,
            &self.specs[HYPER_B2_HIDDEN],
            grad_layer(grads, HYPER_B2_HIDDEN)?,
        )?;
        Ok(dq)
    }
}

fn grad_layer(grads: &mut ParameterSet, id: usize) -> Result<&mut LayerParams, FactorizationError> {
    grads.layer_mut(id).ok_or(FactorizationError::Dimension {
        what: "mixer gradient layers",
        expected: 5,
        actual: id,
    })
}

/// `Q_tot` of a QMIX mixer.
pub fn qmix_total(
    q_chosen: &[f64],
    state: &[f64],
    mixer: &MixerNetwork,
) -> Result<f64, FactorizationError> {
    mixer.total(q_chosen, state)
}

/// Samples random `(state, q, i, δ)` and returns the smallest observed
/// `Q_tot(q + δ e_i) − Q_tot(q)`.
pub fn monotonicity_probe<R: Rng + ?Sized>(
    mixer: &MixerNetwork,
    n_samples: usize,
    rng: &mut R,
) -> Result<f64, FactorizationError> {
    if n_samples == 0 {
        return Err(FactorizationError::InvalidParameter(
            "n_samples must be ≥ 1".into(),
        ));
    }
    let mut min_diff = f64::INFINITY;
    for _ in 0..n_samples {
        let state: Vec<f64> = (0..mixer.state_dim())
            .map(|_| rng.random_range(-1.0..=1.0))
            .collect();
        let q: Vec<f64> = (0..mixer.n_agents())
            .map(|_| rng.random_range(-5.0..=5.0))
            .collect();
        let i = rng.random_range(0..mixer.n_agents());
        let delta = 1.0 - rng.random::<f64>();
        let mut bumped = q.clone();
        bumped[i] += delta;
        let diff = mixer.total(&bumped, &state)? - mixer.total(&q, &state)?;
        min_diff = min_diff.min(diff);
    }
    Ok(min_diff)
}

/// Value-factorization head combining per-agent Q-values into a team value.
#[derive(Debug, Clone, PartialEq)]
pub enum Mixer {
    Vdn { n_agents: usize },
    Qmix(MixerNetwork),
}

impl Mixer {
    pub fn n_agents(&self) -> usize {
        match self {
            Mixer::Vdn { n_agents } => *n_agents,
            Mixer::Qmix(m) => m.n_agents(),
        }
    }

    pub fn total(&self, q: &[f64], state: &[f64]) -> Result<f64, FactorizationError> {
        match self {
            Mixer::Vdn { n_agents } => {
                if q.len() != *n_agents {
                    return Err(FactorizationError::Dimension {
                        what: "agent Q-values",
                        expected: *n_agents,
                        actual: q.len(),
                    });
                }
                vdn_total(q)
            }
            Mixer::Qmix(m) => m.total(q, state),
        }
    }

    pub fn params(&self) -> Option<&ParameterSet> {
        match self {
            Mixer::Vdn { .. } => None,
            Mixer::Qmix(m) => Some(m.params()),
        }
    }

    pub fn params_mut(&mut self) -> Option<&mut ParameterSet> {
        match self {
            Mixer::Vdn { .. } => None,
            Mixer::Qmix(m) => Some(m.params_mut()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Two agents, one mixing unit, emitting W1 = [[1],[1]], b1 = 0, w2 = [1], b2 = 0
    /// regardless of the state.
    fn constant_mixer() -> MixerNetwork {
        let mut m = MixerNetwork::zeros(2, 3, 1, 3).unwrap();
        let p = m.params_mut();
        p.tensor_mut(HYPER_W1, "bias")
            .unwrap()
            .data_mut()
            .copy_from_slice(&[1.0, 1.0]);
        p.tensor_mut(HYPER_W2, "bias").unwrap().data_mut()[0] = 1.0;
        m
    }

    #[test]
    fn vdn_examples() {
        assert_eq!(vdn_total(&[1.0, 2.0, 3.0]).unwrap(), 6.0);
        assert_eq!(vdn_total(&[-0.25]).unwrap(), -0.25);
        assert_eq!(vdn_total(&[0.0, 0.0]).unwrap(), 0.0);
        assert!(vdn_total(&[]).is_err());
    }

    #[test]
    fn zero_mixer_is_zero() {
        let m = MixerNetwork::zeros(3, 4, 8, 4).unwrap();
        assert_eq!(
            m.total(&[1.0, -2.0, 3.0], &[0.1, 0.2, 0.3, 0.4]).unwrap(),
            0.0
        );
    }

    #[test]
    fn hand_set_mixer() {
        let m = constant_mixer();
        assert_eq!(qmix_total(&[2.0, 3.0], &[0.3, -0.2, 0.9], &m).unwrap(), 5.0);
    }

    #[test]
    fn hand_set_mixer_probe_is_delta() {
        let m = constant_mixer();
        let state = [0.0, 0.5, -0.5];
        for i in 0..2 {
            let mut q = vec![1.0, 2.0];
            let base = m.total(&q, &state).unwrap();
            q[i] += 0.1;
            let diff = m.total(&q, &state).unwrap() - base;
            assert!((diff - 0.1).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_mixer_probe_is_zero() {
        let m = MixerNetwork::zeros(2, 3, 4, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(monotonicity_probe(&m, 100, &mut rng).unwrap(), 0.0);
    }

    #[test]
    fn random_mixer_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let m = MixerNetwork::new(4, 6, 16, 6, true, &mut rng).unwrap();
        assert!(monotonicity_probe(&m, 1000, &mut rng).unwrap() >= -1e-9);
    }

    #[test]
    fn dimension_errors() {
        let m = MixerNetwork::zeros(2, 3, 4, 3).unwrap();
        assert!(m.total(&[1.0], &[0.0; 3]).is_err());
        assert!(m.total(&[1.0, 2.0], &[0.0; 2]).is_err());
        assert!(Mixer::Vdn { n_agents: 2 }.total(&[1.0], &[]).is_err());
    }

    #[test]
    fn mixer_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = MixerNetwork::new(3, 4, 5, 4, false, &mut rng).unwrap();
        let q = [0.7, -1.2, 0.4];
        let state = [0.2, -0.6, 0.9, 0.1];
        let (_, trace) = m.forward_traced(&q, &state).unwrap();
        let mut grads = m.params().zeros_like();
        let dq = m.backward(&trace, 1.0, &mut grads).unwrap();

        let h = 1e-6;
        for i in 0..3 {
            let (mut up, mut down) = (q, q);
            up[i] += h;
            down[i] -= h;
            let fd = (m.total(&up, &state).unwrap() - m.total(&down, &state).unwrap()) / (2.0 * h);
            assert!((fd - dq[i]).abs() < 1e-7, "dq[{i}]");
            assert!(dq[i] >= 0.0);
        }
        let flat = m.params().flatten();
        let analytic = grads.flatten();
        for (j, &g) in analytic.iter().enumerate() {
            let mut p = m.clone();
            let mut v = flat.clone();
            v[j] += h;
            p.params_mut().assign_flat(&v).unwrap();
            let up = p.total(&q, &state).unwrap();
            v[j] -= 2.0 * h;
            p.params_mut().assign_flat(&v).unwrap();
            let down = p.total(&q, &state).unwrap();
            let fd = (up - down) / (2.0 * h);
            assert!((fd - g).abs() < 1e-7, "param {j}: fd {fd} analytic {g}");
        }
    }
}
