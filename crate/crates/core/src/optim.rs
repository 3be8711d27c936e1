//! Stochastic gradient descent with step decay.

use serde::{Deserialize, Serialize};

use crate::error::{MlgcnError, Result};
use crate::model::ModelState;

/// `base × factor^⌊epoch / decay_epoch⌋`, epochs counted from 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub base: f64,
    pub factor: f64,
    pub decay_epoch: usize,
}

impl StepSchedule {
    pub fn rate(&self, epoch: usize) -> f64 {
        let drops = epoch.checked_div(self.decay_epoch).unwrap_or(0);
        self.base * self.factor.powi(i32::try_from(drops).unwrap_or(i32::MAX))
    }
}

/// Plain SGD, optionally with heavy-ball momentum.
#[derive(Debug, Clone, PartialEq)]
pub struct Sgd {
    pub momentum: f64,
    velocity: Vec<f64>,
}

impl Sgd {
    pub fn new(momentum: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&momentum) {
            return Err(MlgcnError::Parameter(format!("momentum must lie in [0, 1), got {momentum}")));
        }
        Ok(Sgd {
            momentum,
            velocity: Vec::new(),
        })
    }

    /// `p ← p − lr·g` (or the momentum form), then zeroes the gradient
    /// buffers and advances the step counter. Non-finite gradients abort
    /// before any parameter changes.
    pub fn step(&mut self, state: &mut ModelState, lr: f64) -> Result<()> {
        let grads = state.grads_flat();
        if let Some(bad) = grads.iter().position(|g| !g.is_finite()) {
            let group = state
                .group_ranges()
                .into_iter()
                .find(|(_, r)| r.contains(&bad))
                .map_or("unknown", |(name, _)| name);
            return Err(MlgcnError::numerical(
                "sgd",
                format!("non-finite gradient in group {group} at flat index {bad} (step {})", state.step),
            ));
        }
        let mut params = state.params_flat();
        if self.momentum > 0.0 {
            if self.velocity.len() != params.len() {
                self.velocity = vec![0.0; params.len()];
            }
            for ((p, v), g) in params.iter_mut().zip(&mut self.velocity).zip(&grads) {
                *v = self.momentum * *v + g;
                *p -= lr * *v;
            }
        } else {
            for (p, g) in params.iter_mut().zip(&grads) {
                *p -= lr * g;
            }
        }
        state.set_params_flat(&params)?;
        state.zero_grads();
        state.step += 1;
        Ok(())
    }
}
