//! Adam with bias correction over named parameter blocks.

use crate::error::{NbdError, Result};

#[derive(Debug, Clone)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        AdamConfig { learning_rate, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Per-parameter first/second moment accumulators plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    /// Allocate moments matching the given parameter blocks.
    pub fn new(blocks: &[&[f64]], learning_rate: f64) -> Self {
        AdamState {
            config: AdamConfig::with_lr(learning_rate),
            m: blocks.iter().map(|b| vec![0.0; b.len()]).collect(),
            v: blocks.iter().map(|b| vec![0.0; b.len()]).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.config.learning_rate = lr;
    }

    /// One bias-corrected update applied in place. Gradients must be finite;
    /// a non-finite gradient aborts with the offending parameter's name.
    pub fn step(
        &mut self,
        params: &mut [&mut [f64]],
        grads: &[&[f64]],
        names: &[String],
    ) -> Result<()> {
        assert_eq!(params.len(), self.m.len(), "block count changed under Adam");
        assert_eq!(grads.len(), self.m.len());
        for (i, g) in grads.iter().enumerate() {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(NbdError::NonFiniteGradient {
                    param: names.get(i).cloned().unwrap_or_else(|| format!("block{i}")),
                    step: self.step + 1,
                });
            }
        }
        self.step += 1;
        let t = self.step as f64;
        let b1 = self.config.beta1;
        let b2 = self.config.beta2;
        let bias1 = 1.0 - b1.powf(t);
        let bias2 = 1.0 - b2.powf(t);
        let lr = self.config.learning_rate;
        let eps = self.config.epsilon;
        for ((p, g), (m, v)) in
            params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            assert_eq!(p.len(), g.len(), "gradient length mismatch");
            for k in 0..p.len() {
                m[k] = b1 * m[k] + (1.0 - b1) * g[k];
                v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
                let mh = m[k] / bias1;
                let vh = v[k] / bias2;
                p[k] -= lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }
}
