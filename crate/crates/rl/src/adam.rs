use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Gradients are rescaled to this global L2 norm when it is exceeded.
    pub max_grad_norm: Option<f64>,
}

impl AdamConfig {
    pub fn new(lr: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps,
            max_grad_norm: None,
        }
    }
}

/// Adam over the concatenation of several parameter groups.
#[derive(Debug, Clone)]
pub struct Adam<F: Scalar> {
    pub config: AdamConfig,
    m: Vec<F>,
    v: Vec<F>,
    t: i32,
}

impl<F: Scalar> Adam<F> {
    pub fn new(config: AdamConfig, len: usize) -> Self {
        Self {
            config,
            m: vec![F::zero(); len],
            v: vec![F::zero(); len],
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> i32 {
        self.t
    }

    /// Returns the gradient norm before clipping.
    pub fn step(&mut self, params: &mut [&mut [F]], grads: &[&[F]]) -> f64 {
        let total: usize = params.iter().map(|p| p.len()).sum();
        assert_eq!(total, self.m.len(), "parameter count changed");
        assert_eq!(params.len(), grads.len());
        let norm = grads
            .iter()
            .flat_map(|g| g.iter())
            .map(|g| g.f64() * g.f64())
            .sum::<f64>()
            .sqrt();
        let scale = match self.config.max_grad_norm {
            Some(max) if norm > max => max / norm,
            _ => 1.0,
        };
        self.t += 1;
        let c = &self.config;
        let (b1, b2) = (F::of(c.beta1), F::of(c.beta2));
        let bias1 = 1.0 - c.beta1.powi(self.t);
        let bias2 = 1.0 - c.beta2.powi(self.t);
        let step = F::of(c.lr * bias2.sqrt() / bias1);
        let eps = F::of(c.eps * bias2.sqrt());
        let scale = F::of(scale);
        let mut k = 0;
        for (p, g) in params.iter_mut().zip(grads) {
            assert_eq!(p.len(), g.len());
            for (pi, gi) in p.iter_mut().zip(g.iter()) {
                let gi = *gi * scale;
                self.m[k] = b1 * self.m[k] + (F::one() - b1) * gi;
                self.v[k] = b2 * self.v[k] + (F::one() - b2) * gi * gi;
                *pi -= step * self.m[k] / (self.v[k].sqrt() + eps);
                k += 1;
            }
        }
        norm
    }
}
