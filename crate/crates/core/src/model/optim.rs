use serde::{Deserialize, Serialize};

use super::{ModelConfig, Parameters};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip; `<= 0` disables clipping.
    pub clip_norm: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 1.0,
        }
    }
}

/// Adam without weight decay.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub m: Parameters<f32>,
    pub v: Parameters<f32>,
    pub t: u64,
}

impl Adam {
    pub fn new(config: &ModelConfig) -> Self {
        Self {
            m: Parameters::zeros(config),
            v: Parameters::zeros(config),
            t: 0,
        }
    }

    /// Apply one update at learning rate `lr`. Returns the pre-clip gradient norm.
    pub fn step(&mut self, params: &mut Parameters<f32>, grads: &Parameters<f32>, cfg: &AdamConfig, lr: f64) -> f64 {
        let norm = grads.global_norm();
        let clip = if cfg.clip_norm > 0.0 && norm > cfg.clip_norm {
            (cfg.clip_norm / norm) as f32
        } else {
            1.0
        };
        self.t += 1;
        let (b1, b2) = (cfg.beta1 as f32, cfg.beta2 as f32);
        let bc1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.t as i32);
        let step_size = (lr * bc2.sqrt() / bc1) as f32;
        let eps = (cfg.eps * bc2.sqrt()) as f32;
        let tensors = params.tensors_mut();
        let gs = grads.tensors();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for (((p, g), m), v) in tensors.into_iter().zip(gs).zip(ms).zip(vs) {
            for i in 0..p.len() {
                let gi = g[i] * clip;
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                p[i] -= step_size * m[i] / (v[i].sqrt() + eps);
            }
        }
        norm
    }
}
