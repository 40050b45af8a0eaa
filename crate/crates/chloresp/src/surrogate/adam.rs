//! Bias-corrected Adam over the predictor's parameter tensors.

use serde::{Deserialize, Serialize};

use super::net::{NetParams, TensorMut, TensorRef};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moment estimates, shaped exactly like the parameters,
/// plus the step counter used for bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: NetParams,
    pub v: NetParams,
    pub step: u64,
}

impl AdamState {
    pub fn new(net: &NetParams) -> Self {
        Self {
            m: net.zeros_like(),
            v: net.zeros_like(),
            step: 0,
        }
    }
}

/// One Adam update of `net` in place, given the gradient.
pub fn adam_step(net: &mut NetParams, state: &mut AdamState, grads: &NetParams, lr: f64) {
    state.step += 1;
    let t = state.step as i32;
    let m_corr = 1.0 - BETA1.powi(t);
    let v_corr = 1.0 - BETA2.powi(t);

    let params = net.tensors_mut();
    let ms = state.m.tensors_mut();
    let vs = state.v.tensors_mut();
    let gs = grads.tensors();

    for (((p, m), v), g) in params.into_iter().zip(ms).zip(vs).zip(gs) {
        match (p, m, v, g) {
            (TensorMut::Mat(p), TensorMut::Mat(m), TensorMut::Mat(v), TensorRef::Mat(g)) => {
                for (((p, m), v), g) in
                    p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g.iter())
                {
                    update_one(p, m, v, *g, lr, m_corr, v_corr);
                }
            }
            (TensorMut::Vect(p), TensorMut::Vect(m), TensorMut::Vect(v), TensorRef::Vect(g)) => {
                for (((p, m), v), g) in
                    p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g.iter())
                {
                    update_one(p, m, v, *g, lr, m_corr, v_corr);
                }
            }
            _ => unreachable!("parameter and moment tensors always align"),
        }
    }
}

#[inline]
fn update_one(p: &mut f64, m: &mut f64, v: &mut f64, g: f64, lr: f64, m_corr: f64, v_corr: f64) {
    *m = BETA1 * *m + (1.0 - BETA1) * g;
    *v = BETA2 * *v + (1.0 - BETA2) * g * g;
    let m_hat = *m / m_corr;
    let v_hat = *v / v_corr;
    *p -= lr * m_hat / (v_hat.sqrt() + EPSILON);
}
