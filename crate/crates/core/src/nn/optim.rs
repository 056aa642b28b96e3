use super::{NnError, ParameterSet};

/// Maximum global gradient norm used when clipping is enabled.
pub const DEFAULT_MAX_GRAD_NORM: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment accumulators shaped like the parameters they track.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub first_moment: ParameterSet,
    pub second_moment: ParameterSet,
    pub step: u64,
    pub config: AdamConfig,
}

impl OptimizerState {
    pub fn new(params: &ParameterSet) -> Self {
        Self {
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
            step: 0,
            config: AdamConfig::default(),
        }
    }
}

/// One bias-corrected Adam step, in place.
pub fn adam_update(
    params: &mut ParameterSet,
    grads: &ParameterSet,
    state: &mut OptimizerState,
    lr: f64,
) -> Result<(), NnError> {
    params.check_same_shape(grads)?;
    params.check_same_shape(&state.first_moment)?;
    state.step += 1;
    let AdamConfig { beta1, beta2, eps } = state.config;
    let t = state.step as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);

    let m_iter = state.first_moment.iter_mut();
    let v_iter = state.second_moment.iter_mut();
    for (((_, _, p), (_, _, g)), ((_, _, m), (_, _, v))) in
        params.iter_mut().zip(grads.iter()).zip(m_iter.zip(v_iter))
    {
        for (((p, &g), m), v) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut().iter_mut())
            .zip(v.data_mut().iter_mut())
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Rescales `grads` so that its global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut ParameterSet, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}
