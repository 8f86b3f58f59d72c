//! Adam optimizer and stepwise learning-rate schedules.

use crate::error::{Error, Result};
use crate::tape::ParamStore;

/// Adam hyperparameters. Defaults are the conventional
/// (0.9, 0.999, 1e-8).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moment estimates:
///
///   m <- b1*m + (1-b1)*g        v <- b2*v + (1-b2)*g^2
///   p <- p - lr * (m/(1-b1^t)) / (sqrt(v/(1-b2^t)) + eps)
///
/// Moments are stored per parameter in store order, so the same store
/// must be passed to every step.
pub struct Adam {
    config: AdamConfig,
    step_count: u64,
    /// (first moment, second moment) per parameter, aligned with the
    /// store's insertion order.
    moments: Vec<(Vec<f32>, Vec<f32>)>,
}

impl Adam {
    pub fn new(store: &ParamStore<f32>, config: AdamConfig) -> Self {
        let moments = store
            .iter()
            .map(|(_, e)| (vec![0.0; e.value.len()], vec![0.0; e.value.len()]))
            .collect();
        Adam {
            config,
            step_count: 0,
            moments,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one update from the gradients currently in the store.
    pub fn step(&mut self, store: &mut ParamStore<f32>, lr: f32) -> Result<()> {
        if store.len() != self.moments.len() {
            return Err(Error::InvalidSpec(format!(
                "optimizer tracks {} parameters, store has {}",
                self.moments.len(),
                store.len()
            )));
        }
        if !(lr.is_finite() && lr > 0.0) {
            return Err(Error::InvalidSpec(format!("learning rate {lr} must be positive")));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);
        for ((name, entry), (m, v)) in store.iter_mut().zip(&mut self.moments) {
            if entry.value.len() != m.len() {
                return Err(Error::InvalidSpec(format!(
                    "parameter {name} changed size under the optimizer"
                )));
            }
            if !entry.grad.all_finite() {
                return Err(Error::NumericFailure {
                    node: format!("gradient of {name}"),
                });
            }
            let grads = entry.grad.as_slice();
            let values = entry.value.as_mut_slice();
            for i in 0..values.len() {
                let g = grads[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                values[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Piecewise-constant schedule over 1-indexed epochs. Each stage is
/// (last epoch inclusive, rate); asking past the final stage is an
/// error rather than a silent clamp.
#[derive(Debug, Clone, PartialEq)]
pub struct LrSchedule {
    stages: Vec<(usize, f32)>,
}

impl LrSchedule {
    pub fn new(stages: Vec<(usize, f32)>) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::InvalidSpec("schedule needs at least one stage".into()));
        }
        let mut prev = 0usize;
        for &(last_epoch, rate) in &stages {
            if last_epoch <= prev {
                return Err(Error::InvalidSpec(format!(
                    "stage boundaries must increase, got {last_epoch} after {prev}"
                )));
            }
            if !(rate.is_finite() && rate > 0.0) {
                return Err(Error::InvalidSpec(format!("rate {rate} must be positive")));
            }
            prev = last_epoch;
        }
        Ok(LrSchedule { stages })
    }

    /// One rate forever.
    pub fn constant(rate: f32) -> Result<Self> {
        LrSchedule::new(vec![(usize::MAX, rate)])
    }

    /// Last epoch the schedule covers.
    pub fn max_epoch(&self) -> usize {
        self.stages.last().map(|&(e, _)| e).unwrap_or(0)
    }

    /// Rate for a 1-indexed epoch.
    pub fn rate_for(&self, epoch: usize) -> Result<f32> {
        if epoch == 0 {
            return Err(Error::InvalidSpec("epochs are 1-indexed".into()));
        }
        for &(last_epoch, rate) in &self.stages {
            if epoch <= last_epoch {
                return Ok(rate);
            }
        }
        Err(Error::ScheduleExhausted {
            epoch,
            max: self.max_epoch(),
        })
    }
}

/// 180-epoch schedule used for the 10-class benchmark runs:
/// 1e-3 to epoch 100, then 5e-4 to 140, 1e-4 to 160, 5e-5 to 180.
pub fn cifar_schedule() -> LrSchedule {
    LrSchedule::new(vec![(100, 1e-3), (140, 5e-4), (160, 1e-4), (180, 5e-5)])
        .expect("static schedule is valid")
}

/// 30-epoch flat schedule used for the 6-class face runs.
pub fn fer_schedule() -> LrSchedule {
    LrSchedule::new(vec![(30, 1e-4)]).expect("static schedule is valid")
}
