//! Adam with a linear learning-rate warmup.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
    /// Length of the linear warmup ramp; 0 disables warmup.
    pub warmup_steps: u64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            warmup_steps: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<Vec<f32>>,
    second: Vec<Vec<f32>>,
    step: u64,
}

impl AdamState {
    /// Zero moments for parameters with the given element counts.
    pub fn new(param_lens: &[usize], config: AdamConfig) -> Self {
        Self {
            config,
            first: param_lens.iter().map(|&n| vec![0.0; n]).collect(),
            second: param_lens.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    /// Number of updates applied so far.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, param: usize) -> &[f32] {
        &self.first[param]
    }

    pub fn second_moment(&self, param: usize) -> &[f32] {
        &self.second[param]
    }

    /// Learning rate the next update will use.
    ///
    /// Ramps linearly as `lr * s / W` where `s` counts completed updates, so the
    /// very first update under warmup is a no-op.
    pub fn effective_lr(&self) -> f32 {
        warmup_lr(self.config.learning_rate, self.step, self.config.warmup_steps)
    }

    /// Applies one bias-corrected Adam update in place.
    ///
    /// All gradients are checked before any parameter is touched, so a
    /// non-finite gradient leaves both parameters and state unchanged.
    pub fn update<S: AsRef<str>>(
        &mut self,
        names: &[S],
        params: &mut [&mut [f32]],
        grads: &[&[f32]],
    ) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != params.len() || names.len() != params.len() {
            return Err(Error::Contract(format!(
                "adam: expected {} parameter tensors, got {} params / {} grads / {} names",
                self.first.len(),
                params.len(),
                grads.len(),
                names.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.first[i].len() || g.len() != p.len() {
                return Err(Error::shape("adam_step", &[self.first[i].len()], &[p.len(), g.len()]));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient {
                    param: names[i].as_ref().to_string(),
                });
            }
        }

        let lr = self.effective_lr();
        self.step += 1;
        let AdamConfig {
            beta1, beta2, epsilon, ..
        } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);

        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.first[i];
            let v = &mut self.second[i];
            for j in 0..p.len() {
                let gj = g[j];
                m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                p[j] -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

pub fn warmup_lr(base: f32, completed_steps: u64, warmup_steps: u64) -> f32 {
    if warmup_steps == 0 || completed_steps >= warmup_steps {
        base
    } else {
        base * completed_steps as f32 / warmup_steps as f32
    }
}
