//! Adam with bias-corrected first and second moments.

use super::model::{Gradients, RecurrentModel};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: i32,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn for_shapes<'a>(tensors: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let zeros: Vec<Vec<f64>> = tensors.into_iter().map(|t| vec![0.0; t.len()]).collect();
        AdamState {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn for_model(model: &RecurrentModel) -> Self {
        Self::for_shapes(model.tensors())
    }
}

/// One Adam update over parallel lists of parameter and gradient tensors.
pub fn adam_step(params: &mut [&mut [f64]], grads: &[&[f64]], state: &mut AdamState, lr: f64) {
    assert_eq!(params.len(), grads.len(), "parameter/gradient tensor count");
    assert_eq!(params.len(), state.m.len(), "optimizer state tensor count");
    state.step += 1;
    let c1 = 1.0 - BETA1.powi(state.step);
    let c2 = 1.0 - BETA2.powi(state.step);
    for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[k], &mut state.v[k]);
        assert_eq!(p.len(), g.len(), "tensor {k} length");
        for j in 0..p.len() {
            let gj = g[j];
            m[j] = BETA1 * m[j] + (1.0 - BETA1) * gj;
            v[j] = BETA2 * v[j] + (1.0 - BETA2) * gj * gj;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            p[j] -= lr * m_hat / (v_hat.sqrt() + EPSILON);
        }
    }
}

/// Adam bound to one model's parameter layout.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    state: AdamState,
}

impl Adam {
    pub fn new(model: &RecurrentModel, learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            state: AdamState::for_model(model),
        }
    }

    pub fn step(&mut self, model: &mut RecurrentModel, grads: &Gradients) {
        let g = grads.tensors();
        let mut p = model.tensors_mut();
        adam_step(&mut p, &g, &mut self.state, self.learning_rate);
    }
}
