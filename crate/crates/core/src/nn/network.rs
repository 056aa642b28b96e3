use super::layers::{
    dense_backward, dense_backward_params, dense_forward_cached, recurrent_backward,
    recurrent_step_cached, Activation, DenseCache, LayerKind, LayerSpec, RecurrentCache,
};
use super::{NnError, ParameterSet, Tensor};

/// Layer stack of an agent network. Layer ids run from 0 at the input.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    layers: Vec<LayerSpec>,
}

impl Architecture {
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::InvalidArchitecture("no layers".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.layer_id != i {
                return Err(NnError::InvalidArchitecture(format!(
                    "layer at position {i} has id {}",
                    l.layer_id
                )));
            }
            if l.in_dim == 0 || l.out_dim == 0 {
                return Err(NnError::InvalidArchitecture(format!(
                    "layer {i} has a zero dimension"
                )));
            }
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(NnError::InvalidArchitecture(format!(
                    "layer {} outputs {} but layer {} expects {}",
                    pair[0].layer_id, pair[0].out_dim, pair[1].layer_id, pair[1].in_dim
                )));
            }
        }
        if layers
            .iter()
            .filter(|l| l.kind == LayerKind::Recurrent)
            .count()
            > 1
        {
            return Err(NnError::InvalidArchitecture(
                "at most one recurrent layer is supported".into(),
            ));
        }
        Ok(Self { layers })
    }

    /// `obs → dense(hidden, relu) → recurrent(hidden) → dense(n_actions, linear)`.
    pub fn agent_default(obs_dim: usize, hidden: usize, n_actions: usize) -> Result<Self, NnError> {
        Self::new(vec![
            LayerSpec::dense(0, obs_dim, hidden, Activation::Relu),
            LayerSpec::recurrent(1, hidden, hidden),
            LayerSpec::dense(2, hidden, n_actions, Activation::Linear),
        ])
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    /// Width of the recurrent state; 0 for purely feed-forward stacks.
    pub fn hidden_dim(&self) -> usize {
        self.layers
            .iter()
            .find(|l| l.kind == LayerKind::Recurrent)
            .map_or(0, |l| l.out_dim)
    }

    pub fn initial_hidden(&self) -> Vec<f64> {
        vec![0.0; self.hidden_dim()]
    }

    /// All-zero parameters with this architecture's shapes.
    pub fn zero_params(&self) -> ParameterSet {
        let mut p = ParameterSet::new();
        for l in &self.layers {
            for (name, shape) in l.tensor_shapes() {
                p.insert(l.layer_id, name, Tensor::zeros(&shape));
            }
        }
        p
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| l.tensor_shapes())
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }
}

#[derive(Debug, Clone)]
enum LayerTrace {
    Dense(DenseCache),
    Recurrent(RecurrentCache),
}

/// Forward activations of a whole sequence, kept for backpropagation through time.
#[derive(Debug, Clone)]
pub struct SequenceTrace {
    steps: Vec<Vec<LayerTrace>>,
    outputs: Vec<Vec<f64>>,
    final_hidden: Vec<f64>,
}

impl SequenceTrace {
    pub fn outputs(&self) -> &[Vec<f64>] {
        &self.outputs
    }

    pub fn final_hidden(&self) -> &[f64] {
        &self.final_hidden
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }
}

fn layer_params<'a>(
    params: &'a ParameterSet,
    spec: &LayerSpec,
) -> Result<&'a super::LayerParams, NnError> {
    params
        .layer(spec.layer_id)
        .ok_or_else(|| NnError::MissingTensor {
            layer_id: spec.layer_id,
            name: "<layer>".into(),
        })
}

fn step_traced(
    obs: &[f64],
    arch: &Architecture,
    params: &ParameterSet,
    hidden: &[f64],
) -> Result<(Vec<LayerTrace>, Vec<f64>, Vec<f64>), NnError> {
    let mut traces = Vec::with_capacity(arch.layers.len());
    let mut x = obs.to_vec();
    let mut h_next = hidden.to_vec();
    for spec in &arch.layers {
        let lp = layer_params(params, spec)?;
        match spec.kind {
            LayerKind::Dense => {
                let c = dense_forward_cached(&x, spec, lp)?;
                x = c.output.clone();
                traces.push(LayerTrace::Dense(c));
            }
            LayerKind::Recurrent => {
                let c = recurrent_step_cached(&x, hidden, spec, lp)?;
                x = c.output.iter().map(|&v| spec.activation.apply(v)).collect();
                h_next = c.output.clone();
                traces.push(LayerTrace::Recurrent(c));
            }
        }
    }
    Ok((traces, x, h_next))
}

/// One time step. Returns `(q, h')`.
pub fn network_step(
    obs: &[f64],
    arch: &Architecture,
    params: &ParameterSet,
    hidden: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), NnError> {
    if hidden.len() != arch.hidden_dim() {
        return Err(NnError::DimensionMismatch {
            layer_id: arch
                .layers
                .iter()
                .position(|l| l.kind == LayerKind::Recurrent)
                .unwrap_or(0),
            expected: arch.hidden_dim(),
            actual: hidden.len(),
        });
    }
    let (_, y, h) = step_traced(obs, arch, params, hidden)?;
    Ok((y, h))
}

/// Runs the network over a sequence, threading the recurrent state from `h0`.
pub fn network_forward<O: AsRef<[f64]>>(
    obs_seq: &[O],
    arch: &Architecture,
    params: &ParameterSet,
    h0: &[f64],
) -> Result<(Vec<Vec<f64>>, Vec<f64>), NnError> {
    if obs_seq.is_empty() {
        return Err(NnError::EmptySequence);
    }
    let mut h = h0.to_vec();
    let mut out = Vec::with_capacity(obs_seq.len());
    for obs in obs_seq {
        let (q, h_next) = network_step(obs.as_ref(), arch, params, &h)?;
        out.push(q);
        h = h_next;
    }
    Ok((out, h))
}

pub fn network_forward_traced<O: AsRef<[f64]>>(
    obs_seq: &[O],
    arch: &Architecture,
    params: &ParameterSet,
    h0: &[f64],
) -> Result<SequenceTrace, NnError> {
    if obs_seq.is_empty() {
        return Err(NnError::EmptySequence);
    }
    if h0.len() != arch.hidden_dim() {
        return Err(NnError::DimensionMismatch {
            layer_id: 0,
            expected: arch.hidden_dim(),
            actual: h0.len(),
        });
    }
    let mut h = h0.to_vec();
    let mut steps = Vec::with_capacity(obs_seq.len());
    let mut outputs = Vec::with_capacity(obs_seq.len());
    for obs in obs_seq {
        let (t, y, h_next) = step_traced(obs.as_ref(), arch, params, &h)?;
        steps.push(t);
        outputs.push(y);
        h = h_next;
    }
    Ok(SequenceTrace {
        steps,
        outputs,
        final_hidden: h,
    })
}

/// Backpropagation through time. `d_outputs[t]` is `dL/dq_t`; parameter
/// gradients are accumulated into `grads`, which must be shaped like `params`.
pub fn network_backward(
    arch: &Architecture,
    params: &ParameterSet,
    trace: &SequenceTrace,
    d_outputs: &[Vec<f64>],
    grads: &mut ParameterSet,
) -> Result<(), NnError> {
    if d_outputs.len() != trace.len() {
        return Err(NnError::DimensionMismatch {
            layer_id: arch.num_layers() - 1,
            expected: trace.len(),
            actual: d_outputs.len(),
        });
    }
    let mut dh_carry = vec![0.0; arch.hidden_dim()];
    for (t, layer_traces) in trace.steps.iter().enumerate().rev() {
        let mut dy = d_outputs[t].clone();
        for (spec, lt) in arch.layers.iter().zip(layer_traces).rev() {
            let lp = layer_params(params, spec)?;
            let lg = grads
                .layer_mut(spec.layer_id)
                .ok_or_else(|| NnError::MissingTensor {
                    layer_id: spec.layer_id,
                    name: "<gradient layer>".into(),
                })?;
            match lt {
                LayerTrace::Dense(c) if spec.layer_id == 0 => {
                    dense_backward_params(c, &dy, spec, lg)?;
                }
                LayerTrace::Dense(c) => {
                    dy = dense_backward(c, &dy, spec, lp, lg)?;
                }
                LayerTrace::Recurrent(c) => {
                    // the recurrent output passes through its (usually linear)
                    // activation before the next layer
                    let mut dh_out: Vec<f64> = dy
                        .iter()
                        .zip(&c.output)
                        .map(|(&g, &o)| match spec.activation {
                            Activation::Linear => g,
                            Activation::Relu => {
                                if o > 0.0 {
                                    g
                                } else {
                                    0.0
                                }
                            }
                            Activation::Tanh => {
                                let y = o.tanh();
                                g * (1.0 - y * y)
                            }
                        })
                        .collect();
                    for (d, c) in dh_out.iter_mut().zip(&dh_carry) {
                        *d += c;
                    }
                    let (dx, dh_prev) = recurrent_backward(c, &dh_out, spec, lp, lg)?;
                    dh_carry = dh_prev;
                    dy = dx;
                }
            }
        }
    }
    Ok(())
}

/// A scalar loss that can report its exact gradient.
pub trait DifferentiableLoss {
    fn loss_and_gradients(&self, params: &ParameterSet) -> Result<(f64, ParameterSet), NnError>;
}

/// Exact reverse-mode gradients of `loss` at `params`.
pub fn compute_gradients<L: DifferentiableLoss + ?Sized>(
    loss: &L,
    params: &ParameterSet,
) -> Result<ParameterSet, NnError> {
    let (value, grads) = loss.loss_and_gradients(params)?;
    if !value.is_finite() {
        return Err(NnError::NonFinite("loss".into()));
    }
    if !grads.is_finite() {
        return Err(NnError::NonFinite("gradients".into()));
    }
    Ok(grads)
}
