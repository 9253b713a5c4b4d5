use super::params::ModelParams;

/// Adam moments and hyper-parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ModelParams,
    pub v: ModelParams,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub lr: f64,
}

impl AdamState {
    pub fn new(params: &ModelParams, lr: f64) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step_count: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            lr,
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut ModelParams, grads: &ModelParams, state: &mut AdamState) {
    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2, eps, lr) = (state.beta1, state.beta2, state.eps, state.lr);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let tensors = params
        .slices_mut()
        .into_iter()
        .zip(grads.slices())
        .zip(state.m.slices_mut())
        .zip(state.v.slices_mut());
    for (((p, g), m), v) in tensors {
        for k in 0..p.len() {
            m[k] = b1 * m[k] + (1.0 - b1) * g[k];
            v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            p[k] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}
