use serde::{Deserialize, Serialize};

use super::ParamStore;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Adam hyper-parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment buffers for every parameter of one store.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
    step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig, store: &ParamStore<T>) -> Self {
        let zeros = || store.iter().map(|(_, t)| vec![T::zero(); t.len()]).collect();
        Self {
            config,
            first: zeros(),
            second: zeros(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update over every trainable parameter; gradients
/// are cleared afterwards.
pub fn adam_step<T: Scalar>(store: &mut ParamStore<T>, state: &mut AdamState<T>) -> Result<()> {
    if state.first.len() != store.len() {
        return Err(Error::Config(format!(
            "optimizer tracks {} parameters, store has {}",
            state.first.len(),
            store.len()
        )));
    }
    for (name, tensor) in store.iter() {
        if tensor.requires_grad() && tensor.grad().is_none() {
            return Err(Error::Optimizer(name.to_string()));
        }
    }
    state.step += 1;
    let c = state.config;
    let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
    let lr = T::of(c.lr);
    let eps = T::of(c.epsilon);
    let bias1 = T::one() - T::of(c.beta1.powi(state.step as i32));
    let bias2 = T::one() - T::of(c.beta2.powi(state.step as i32));
    for (i, (_, tensor)) in store.tensors_mut().enumerate() {
        if !tensor.requires_grad() {
            continue;
        }
        let grad = tensor.grad().expect("checked above").to_vec();
        let (m, v) = (&mut state.first[i], &mut state.second[i]);
        for (k, value) in tensor.values_mut().iter_mut().enumerate() {
            let g = grad[k];
            m[k] = b1 * m[k] + (T::one() - b1) * g;
            v[k] = b2 * v[k] + (T::one() - b2) * g * g;
            let m_hat = m[k] / bias1;
            let v_hat = v[k] / bias2;
            *value -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        tensor.zero_grad();
    }
    Ok(())
}
