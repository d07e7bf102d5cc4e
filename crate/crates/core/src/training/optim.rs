use serde::{Deserialize, Serialize};

/// First/second moment estimates of Adam.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) {
    assert_eq!(
        params.len(),
        grads.len(),
        "parameter/gradient length mismatch"
    );
    assert_eq!(
        params.len(),
        state.m.len(),
        "parameter/state length mismatch"
    );
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let mh = state.m[i] / c1;
        let vh = state.v[i] / c2;
        params[i] -= lr * mh / (vh.sqrt() + state.eps);
    }
}

/// `e ← γ e + (1 − γ) p`.
pub fn ema_update(ema: &mut [f64], params: &[f64], gamma: f64) {
    assert_eq!(ema.len(), params.len(), "EMA length mismatch");
    for (e, &p) in ema.iter_mut().zip(params) {
        *e = gamma * *e + (1.0 - gamma) * p;
    }
}
