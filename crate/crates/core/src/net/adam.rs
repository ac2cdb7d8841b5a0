//! Bias-corrected Adam.

use serde::{Deserialize, Serialize};

use super::model::FcnParams;
use super::tensor::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One Adam update over a flat parameter slice. `t` is the 1-based step.
///
/// Moments are stored at parameter precision; the update itself is
/// evaluated in f64.
pub fn adam_update<T: Real>(params: &mut [T], grads: &[T], m: &mut [T], v: &mut [T], t: u64, cfg: &AdamConfig) {
    let c1 = 1.0 - cfg.beta1.powi(t as i32);
    let c2 = 1.0 - cfg.beta2.powi(t as i32);
    for i in 0..params.len() {
        let g = grads[i].f64();
        let mi = cfg.beta1 * m[i].f64() + (1.0 - cfg.beta1) * g;
        let vi = cfg.beta2 * v[i].f64() + (1.0 - cfg.beta2) * g * g;
        m[i] = T::of(mi);
        v[i] = T::of(vi);
        let step = cfg.learning_rate * (mi / c1) / ((vi / c2).sqrt() + cfg.epsilon);
        params[i] = T::of(params[i].f64() - step);
    }
}

/// First and second moments for every model parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: FcnParams<T>,
    pub v: FcnParams<T>,
}

impl<T: Real> AdamState<T> {
    pub fn new(shape_of: &FcnParams<T>) -> Self {
        AdamState {
            step: 0,
            m: shape_of.zeros_like(),
            v: shape_of.zeros_like(),
        }
    }
}

pub fn adam_step<T: Real>(params: &mut FcnParams<T>, grads: &FcnParams<T>, state: &mut AdamState<T>, cfg: &AdamConfig) {
    state.step += 1;
    let t = state.step;
    let grads = grads.tensors();
    let tensors = params
        .tensors_mut()
        .into_iter()
        .zip(state.m.tensors_mut())
        .zip(state.v.tensors_mut());
    for (((p, m), v), (_, g)) in tensors.zip(grads) {
        adam_update(p, g, m, v, t, cfg);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::model::{ArchConfig, FcnModel};

    #[test]
    fn first_step_moves_by_learning_rate() {
        let cfg = AdamConfig::default();
        let (mut w, mut m, mut v) = ([0.5f64], [0.0], [0.0]);
        adam_update(&mut w, &[1.0], &mut m, &mut v, 1, &cfg);
        let expected = -cfg.learning_rate / (1.0 + cfg.epsilon);
        assert!((w[0] - 0.5 - expected).abs() < 1e-15);
    }

    #[test]
    fn quadratic_descends() {
        let cfg = AdamConfig { learning_rate: 0.01, ..AdamConfig::default() };
        let (mut w, mut m, mut v) = ([1.0f64], [0.0], [0.0]);
        let mut last = 1.0f64;
        for t in 1..=100 {
            let g = [2.0 * w[0]];
            adam_update(&mut w, &g, &mut m, &mut v, t, &cfg);
            assert!(w[0].abs() < last);
            last = w[0].abs();
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let model = FcnModel::<f32>::init(ArchConfig::tiny(), 1).unwrap();
        let mut params = model.params.clone();
        let mut state = AdamState::new(&params);
        let zeros = params.zeros_like();
        adam_step(&mut params, &zeros, &mut state, &AdamConfig::default());
        assert_eq!(params, model.params);
        assert_eq!(state.step, 1);
    }
}
