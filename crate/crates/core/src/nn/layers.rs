use super::kernels::{matvec_acc, matvec_t_acc, outer_acc, sigmoid};
use super::{LayerParams, NnError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Linear => z,
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `y`.
    #[inline]
    fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Dense,
    /// Three-gate gated recurrent unit. Its output is the new hidden state.
    Recurrent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub layer_id: usize,
    pub kind: LayerKind,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn dense(layer_id: usize, in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            layer_id,
            kind: LayerKind::Dense,
            in_dim,
            out_dim,
            activation,
        }
    }

    pub fn recurrent(layer_id: usize, in_dim: usize, hidden_dim: usize) -> Self {
        Self {
            layer_id,
            kind: LayerKind::Recurrent,
            in_dim,
            out_dim: hidden_dim,
            activation: Activation::Linear,
        }
    }

    /// Tensor names and shapes this layer owns.
    pub fn tensor_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        let (i, o) = (self.in_dim, self.out_dim);
        match self.kind {
            LayerKind::Dense => vec![(WEIGHT, vec![o, i]), (BIAS, vec![o])],
            LayerKind::Recurrent => {
                let mut v = Vec::with_capacity(9);
                for gate in GATES {
                    v.push((gate.w, vec![o, i]));
                    v.push((gate.u, vec![o, o]));
                    v.push((gate.b, vec![o]));
                }
                v
            }
        }
    }
}

pub(crate) const WEIGHT: &str = "weight";
pub(crate) const BIAS: &str = "bias";

pub(crate) struct GateNames {
    pub w: &'static str,
    pub u: &'static str,
    pub b: &'static str,
}

pub(crate) const UPDATE: GateNames = GateNames {
    w: "w_update",
    u: "u_update",
    b: "b_update",
};
pub(crate) const RESET: GateNames = GateNames {
    w: "w_reset",
    u: "u_reset",
    b: "b_reset",
};
pub(crate) const CANDIDATE: GateNames = GateNames {
    w: "w_candidate",
    u: "u_candidate",
    b: "b_candidate",
};
pub(crate) const GATES: [GateNames; 3] = [UPDATE, RESET, CANDIDATE];

fn fetch<'a>(
    params: &'a LayerParams,
    spec: &LayerSpec,
    name: &str,
    shape: &[usize],
) -> Result<&'a [f64], NnError> {
    let t = params.get(name).ok_or_else(|| NnError::MissingTensor {
        layer_id: spec.layer_id,
        name: name.to_string(),
    })?;
    if t.shape() != shape {
        return Err(NnError::ShapeMismatch {
            layer_id: spec.layer_id,
            name: name.to_string(),
        });
    }
    Ok(t.data())
}

fn fetch_mut<'a>(
    params: &'a mut LayerParams,
    spec: &LayerSpec,
    name: &str,
) -> Result<&'a mut [f64], NnError> {
    params
        .get_mut(name)
        .map(Tensor::data_mut)
        .ok_or_else(|| NnError::MissingTensor {
            layer_id: spec.layer_id,
            name: name.to_string(),
        })
}

fn check_len(spec: &LayerSpec, expected: usize, actual: usize) -> Result<(), NnError> {
    if expected != actual {
        return Err(NnError::DimensionMismatch {
            layer_id: spec.layer_id,
            expected,
            actual,
        });
    }
    Ok(())
}

/// Values saved by a dense forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct DenseCache {
    pub input: Vec<f64>,
    pub pre: Vec<f64>,
    pub output: Vec<f64>,
}

/// `activation(W·x + b)`.
pub fn dense_forward(
    x: &[f64],
    spec: &LayerSpec,
    params: &LayerParams,
) -> Result<Vec<f64>, NnError> {
    Ok(dense_forward_cached(x, spec, params)?.output)
}

pub fn dense_forward_cached(
    x: &[f64],
    spec: &LayerSpec,
    params: &LayerParams,
) -> Result<DenseCache, NnError> {
    check_len(spec, spec.in_dim, x.len())?;
    let w = fetch(params, spec, WEIGHT, &[spec.out_dim, spec.in_dim])?;
    let b = fetch(params, spec, BIAS, &[spec.out_dim])?;
    let mut pre = b.to_vec();
    matvec_acc(w, x, &mut pre);
    let output = pre.iter().map(|&z| spec.activation.apply(z)).collect();
    Ok(DenseCache {
        input: x.to_vec(),
        pre,
        output,
    })
}

/// Accumulates parameter gradients into `grads` and returns `dL/dx`.
pub fn dense_backward(
    cache: &DenseCache,
    dy: &[f64],
    spec: &LayerSpec,
    params: &LayerParams,
    grads: &mut LayerParams,
) -> Result<Vec<f64>, NnError> {
    let dz = dense_param_grads(cache, dy, spec, grads)?;
    let w = fetch(params, spec, WEIGHT, &[spec.out_dim, spec.in_dim])?;
    let mut dx = vec![0.0; spec.in_dim];
    matvec_t_acc(w, &dz, &mut dx);
    Ok(dx)
}

/// Like [`dense_backward`] for a layer whose input needs no gradient: only
/// the parameter gradients are accumulated.
pub fn dense_backward_params(
    cache: &DenseCache,
    dy: &[f64],
    spec: &LayerSpec,
    grads: &mut LayerParams,
) -> Result<(), NnError> {
    dense_param_grads(cache, dy, spec, grads).map(|_| ())
}

fn dense_param_grads(
    cache: &DenseCache,
    dy: &[f64],
    spec: &LayerSpec,
    grads: &mut LayerParams,
) -> Result<Vec<f64>, NnError> {
    check_len(spec, spec.out_dim, dy.len())?;
    let dz: Vec<f64> = dy
        .iter()
        .zip(cache.pre.iter().zip(&cache.output))
        .map(|(&g, (&z, &y))| g * spec.activation.derivative(z, y))
        .collect();
    outer_acc(fetch_mut(grads, spec, WEIGHT)?, &dz, &cache.input);
    for (d, g) in fetch_mut(grads, spec, BIAS)?.iter_mut().zip(&dz) {
        *d += g;
    }
    Ok(dz)
}

/// Values saved by one recurrent step for backpropagation through time.
#[derive(Debug, Clone)]
pub struct RecurrentCache {
    pub input: Vec<f64>,
    pub hidden: Vec<f64>,
    pub update: Vec<f64>,
    pub reset: Vec<f64>,
    pub reset_hidden: Vec<f64>,
    pub candidate: Vec<f64>,
    pub output: Vec<f64>,
}

struct GateView<'a> {
    w: &'a [f64],
    u: &'a [f64],
    b: &'a [f64],
}

fn gate_view<'a>(
    params: &'a LayerParams,
    spec: &LayerSpec,
    gate: &GateNames,
) -> Result<GateView<'a>, NnError> {
    let (i, o) = (spec.in_dim, spec.out_dim);
    Ok(GateView {
        w: fetch(params, spec, gate.w, &[o, i])?,
        u: fetch(params, spec, gate.u, &[o, o])?,
        b: fetch(params, spec, gate.b, &[o])?,
    })
}

fn gate_pre(g: &GateView<'_>, x: &[f64], h: &[f64]) -> Vec<f64> {
    let mut a = g.b.to_vec();
    matvec_acc(g.w, x, &mut a);
    matvec_acc(g.u, h, &mut a);
    a
}

/// One step of the gated recurrent cell:
///
/// ```text
/// z  = σ(W_z x + U_z h + b_z)
/// r  = σ(W_r x + U_r h + b_r)
/// ĥ  = tanh(W x + U (r∘h) + b)
/// h' = (1 − z)∘h + z∘ĥ
/// ```
pub fn recurrent_step(
    x: &[f64],
    h: &[f64],
    spec: &LayerSpec,
    params: &LayerParams,
) -> Result<Vec<f64>, NnError> {
    Ok(recurrent_step_cached(x, h, spec, params)?.output)
}

pub fn recurrent_step_cached(
    x: &[f64],
    h: &[f64],
    spec: &LayerSpec,
    params: &LayerParams,
) -> Result<RecurrentCache, NnError> {
    check_len(spec, spec.in_dim, x.len())?;
    check_len(spec, spec.out_dim, h.len())?;
    let gz = gate_view(params, spec, &UPDATE)?;
    let gr = gate_view(params, spec, &RESET)?;
    let gc = gate_view(params, spec, &CANDIDATE)?;

    let update: Vec<f64> = gate_pre(&gz, x, h).into_iter().map(sigmoid).collect();
    let reset: Vec<f64> = gate_pre(&gr, x, h).into_iter().map(sigmoid).collect();
    let reset_hidden: Vec<f64> = reset.iter().zip(h).map(|(r, h)| r * h).collect();
    let candidate: Vec<f64> = gate_pre(&gc, x, &reset_hidden)
        .into_iter()
        .map(f64::tanh)
        .collect();
    let output = h
        .iter()
        .zip(update.iter().zip(&candidate))
        .map(|(&h, (&z, &c))| (1.0 - z) * h + z * c)
        .collect();
    Ok(RecurrentCache {
        input: x.to_vec(),
        hidden: h.to_vec(),
        update,
        reset,
        reset_hidden,
        candidate,
        output,
    })
}

/// Backpropagates `dL/dh'` through one step. Returns `(dL/dx, dL/dh)`.
pub fn recurrent_backward(
    cache: &RecurrentCache,
    dh_out: &[f64],
    spec: &LayerSpec,
    params: &LayerParams,
    grads: &mut LayerParams,
) -> Result<(Vec<f64>, Vec<f64>), NnError> {
    let n = spec.out_dim;
    check_len(spec, n, dh_out.len())?;
    let gz = gate_view(params, spec, &UPDATE)?;
    let gr = gate_view(params, spec, &RESET)?;
    let gc = gate_view(params, spec, &CANDIDATE)?;

    let mut dx = vec![0.0; spec.in_dim];
    let mut dh: Vec<f64> = dh_out
        .iter()
        .zip(&cache.update)
        .map(|(g, z)| g * (1.0 - z))
        .collect();

    // candidate branch
    let da_c: Vec<f64> = (0..n)
        .map(|k| dh_out[k] * cache.update[k] * (1.0 - cache.candidate[k] * cache.candidate[k]))
        .collect();
    outer_acc(fetch_mut(grads, spec, CANDIDATE.w)?, &da_c, &cache.input);
    outer_acc(
        fetch_mut(grads, spec, CANDIDATE.u)?,
        &da_c,
        &cache.reset_hidden,
    );
    add_into(fetch_mut(grads, spec, CANDIDATE.b)?, &da_c);
    matvec_t_acc(gc.w, &da_c, &mut dx);
    let mut d_reset_hidden = vec![0.0; n];
    matvec_t_acc(gc.u, &da_c, &mut d_reset_hidden);
    for k in 0..n {
        dh[k] += d_reset_hidden[k] * cache.reset[k];
    }

    // update gate
    let da_z: Vec<f64> = (0..n)
        .map(|k| {
            let z = cache.update[k];
            dh_out[k] * (cache.candidate[k] - cache.hidden[k]) * z * (1.0 - z)
        })
        .collect();
    outer_acc(fetch_mut(grads, spec, UPDATE.w)?, &da_z, &cache.input);
    outer_acc(fetch_mut(grads, spec, UPDATE.u)?, &da_z, &cache.hidden);
    add_into(fetch_mut(grads, spec, UPDATE.b)?, &da_z);
    matvec_t_acc(gz.w, &da_z, &mut dx);
    matvec_t_acc(gz.u, &da_z, &mut dh);

    // reset gate
    let da_r: Vec<f64> = (0..n)
        .map(|k| {
            let r = cache.reset[k];
            d_reset_hidden[k] * cache.hidden[k] * r * (1.0 - r)
        })
        .collect();
    outer_acc(fetch_mut(grads, spec, RESET.w)?, &da_r, &cache.input);
    outer_acc(fetch_mut(grads, spec, RESET.u)?, &da_r, &cache.hidden);
    add_into(fetch_mut(grads, spec, RESET.b)?, &da_r);
    matvec_t_acc(gr.w, &da_r, &mut dx);
    matvec_t_acc(gr.u, &da_r, &mut dh);

    Ok((dx, dh))
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_params(w: &[Vec<f64>], b: Vec<f64>) -> LayerParams {
        let mut p = LayerParams::new();
        p.insert(WEIGHT.into(), Tensor::from_rows(w).unwrap());
        p.insert(BIAS.into(), Tensor::vector(b).unwrap());
        p
    }

    fn recurrent_params(spec: &LayerSpec, fill: impl Fn(&str) -> f64) -> LayerParams {
        spec.tensor_shapes()
            .into_iter()
            .map(|(name, shape)| {
                let len = shape.iter().product();
                (
                    name.to_string(),
                    Tensor::new(shape, vec![fill(name); len]).unwrap(),
                )
            })
            .collect()
    }

    #[test]
    fn dense_identity() {
        let spec = LayerSpec::dense(0, 2, 2, Activation::Linear);
        let p = dense_params(&[vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0, 0.0]);
        assert_eq!(
            dense_forward(&[1.0, -2.0], &spec, &p).unwrap(),
            vec![1.0, -2.0]
        );
    }

    #[test]
    fn dense_arithmetic() {
        let spec = LayerSpec::dense(0, 2, 2, Activation::Linear);
        let p = dense_params(&[vec![1.0, 2.0], vec![3.0, 4.0]], vec![0.0, 0.0]);
        assert_eq!(
            dense_forward(&[1.0, 1.0], &spec, &p).unwrap(),
            vec![3.0, 7.0]
        );
    }

    #[test]
    fn dense_relu_clamps() {
        let spec = LayerSpec::dense(0, 1, 1, Activation::Relu);
        let p = dense_params(&[vec![1.0]], vec![-5.0]);
        assert_eq!(dense_forward(&[2.0], &spec, &p).unwrap(), vec![0.0]);
    }

    #[test]
    fn dense_dimension_error_names_layer() {
        let spec = LayerSpec::dense(3, 2, 1, Activation::Linear);
        let p = dense_params(&[vec![1.0, 1.0]], vec![0.0]);
        let err = dense_forward(&[1.0], &spec, &p).unwrap_err();
        assert_eq!(
            err,
            NnError::DimensionMismatch {
                layer_id: 3,
                expected: 2,
                actual: 1
            }
        );
        assert!(err.to_string().contains("layer 3"));
    }

    #[test]
    fn recurrent_zero_fixed_point() {
        let spec = LayerSpec::recurrent(0, 3, 2);
        let p = recurrent_params(&spec, |_| 0.0);
        assert_eq!(
            recurrent_step(&[0.3, -1.0, 2.0], &[0.0, 0.0], &spec, &p).unwrap(),
            vec![0.0, 0.0]
        );
    }

    #[test]
    fn recurrent_zero_params_halves_hidden() {
        let spec = LayerSpec::recurrent(0, 1, 1);
        let p = recurrent_params(&spec, |_| 0.0);
        assert_eq!(
            recurrent_step(&[0.7], &[1.0], &spec, &p).unwrap(),
            vec![0.5]
        );
    }

    #[test]
    fn recurrent_hand_evaluated() {
        let spec = LayerSpec::recurrent(0, 1, 1);
        let p = recurrent_params(&spec, |name| if name == CANDIDATE.w { 1.0 } else { 0.0 });
        let h = recurrent_step(&[1.0], &[0.0], &spec, &p).unwrap();
        // z = σ(0) = 0.5, ĥ = tanh(1), h' = 0.5·tanh(1)
        assert!((h[0] - 0.5 * 1f64.tanh()).abs() < 1e-15);
        assert!((h[0] - 0.380_797_077_977_882_4).abs() < 1e-12);
    }

    #[test]
    fn recurrent_dimension_error() {
        let spec = LayerSpec::recurrent(1, 2, 2);
        let p = recurrent_params(&spec, |_| 0.0);
        assert!(matches!(
            recurrent_step(&[1.0, 2.0], &[0.0], &spec, &p),
            Err(NnError::DimensionMismatch { layer_id: 1, .. })
        ));
    }
}
