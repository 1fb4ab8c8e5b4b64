//! Adam with decoupled weight decay.
//!
//! The decay term is applied directly to the weights (scaled by the learning
//! rate), not mixed into the gradient moments.

use serde::{Deserialize, Serialize};

use super::{Param, Scalar};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamWConfig {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }
}

struct Slot<F: Scalar> {
    m: Vec<F>,
    v: Vec<F>,
}

pub struct AdamW<F: Scalar> {
    pub cfg: AdamWConfig,
    t: u64,
    slots: Vec<Slot<F>>,
}

impl<F: Scalar> AdamW<F> {
    pub fn new(cfg: AdamWConfig) -> Self {
        Self {
            cfg,
            t: 0,
            slots: Vec::new(),
        }
    }

    /// One optimizer step over the given parameters. The parameter list must
    /// be identical (same order, same shapes) on every call.
    pub fn step(&mut self, params: &mut [&mut Param<F>]) {
        if self.slots.is_empty() {
            self.slots = params
                .iter()
                .map(|p| Slot {
                    m: vec![F::zero(); p.len()],
                    v: vec![F::zero(); p.len()],
                })
                .collect();
        }
        assert_eq!(self.slots.len(), params.len(), "parameter list changed");
        self.t += 1;
        let b1 = F::from_f64(self.cfg.beta1);
        let b2 = F::from_f64(self.cfg.beta2);
        let one = F::one();
        let lr = F::from_f64(self.cfg.lr);
        let eps = F::from_f64(self.cfg.eps);
        let wd = F::from_f64(self.cfg.weight_decay);
        let bc1 = F::from_f64(1.0 - self.cfg.beta1.powi(self.t as i32));
        let bc2 = F::from_f64(1.0 - self.cfg.beta2.powi(self.t as i32));
        for (param, slot) in params.iter_mut().zip(&mut self.slots) {
            assert_eq!(param.len(), slot.m.len(), "parameter shape changed");
            for i in 0..param.len() {
                let g = param.grad[i];
                slot.m[i] = b1 * slot.m[i] + (one - b1) * g;
                slot.v[i] = b2 * slot.v[i] + (one - b2) * g * g;
                let m_hat = slot.m[i] / bc1;
                let v_hat = slot.v[i] / bc2;
                let w = param.value[i];
                param.value[i] = w - lr * (m_hat / (v_hat.sqrt() + eps) + wd * w);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decay_is_decoupled_from_gradient() {
        // With zero gradient, a step shrinks weights by exactly lr * wd * w.
        let mut p = Param::new(vec![2.0f64]);
        let mut opt = AdamW::new(AdamWConfig::new(0.1, 0.5));
        opt.step(&mut [&mut p]);
        assert!((p.value[0] - (2.0 - 0.1 * 0.5 * 2.0)).abs() < 1e-12);
    }

    #[test]
    fn first_step_moves_against_gradient_by_lr() {
        // Bias-corrected Adam's first step has magnitude ~lr regardless of
        // gradient scale.
        let mut p = Param::new(vec![0.0f64]);
        p.grad = vec![123.0];
        let mut opt = AdamW::new(AdamWConfig::new(0.01, 0.0));
        opt.step(&mut [&mut p]);
        assert!((p.value[0] + 0.01).abs() < 1e-6, "got {}", p.value[0]);
    }

    #[test]
    fn converges_on_quadratic() {
        // Minimize (w - 3)^2.
        let mut p = Param::new(vec![0.0f64]);
        let mut opt = AdamW::new(AdamWConfig::new(0.05, 0.0));
        for _ in 0..2000 {
            p.grad[0] = 2.0 * (p.value[0] - 3.0);
            opt.step(&mut [&mut p]);
        }
        assert!((p.value[0] - 3.0).abs() < 1e-3, "got {}", p.value[0]);
    }
}
