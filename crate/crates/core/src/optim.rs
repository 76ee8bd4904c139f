//! Adam over named parameter buffers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::generator::{GeneratorParams, ParamGrads};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
struct Moments {
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    state: BTreeMap<String, Moments>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Self {
            cfg,
            state: BTreeMap::new(),
        }
    }

    pub fn lr(&self) -> f64 {
        self.cfg.lr
    }

    /// One bias-corrected Adam update of `param` under `key`.
    pub fn update(&mut self, key: &str, param: &mut [f64], grad: &[f64]) {
        assert_eq!(param.len(), grad.len(), "gradient length for `{key}`");
        let c = self.cfg;
        let st = self.state.entry(key.to_string()).or_insert_with(|| Moments {
            t: 0,
            m: vec![0.0; grad.len()],
            v: vec![0.0; grad.len()],
        });
        st.t += 1;
        let bc1 = 1.0 - c.beta1.powi(st.t);
        let bc2 = 1.0 - c.beta2.powi(st.t);
        for ((p, g), (m, v)) in param.iter_mut().zip(grad).zip(st.m.iter_mut().zip(st.v.iter_mut())) {
            *m = c.beta1 * *m + (1.0 - c.beta1) * g;
            *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
            let mhat = *m / bc1;
            let vhat = *v / bc2;
            *p -= c.lr * mhat / (vhat.sqrt() + c.eps);
        }
    }

    /// Apply every gradient buffer in `grads` to the matching array.
    pub fn step_params(&mut self, params: &mut GeneratorParams, grads: &ParamGrads) {
        for (name, g) in &grads.0 {
            let arr = params
                .get_mut(name)
                .unwrap_or_else(|| panic!("gradient for unknown parameter `{name}`"));
            self.update(name, &mut arr.data, g);
        }
    }
}
