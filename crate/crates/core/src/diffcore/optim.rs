//! Adam optimizer and learning-rate schedules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::nn::ParameterStore;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Learning-rate schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    /// Cosine annealing from the initial rate down to zero, no restarts.
    CosineToZero,
    Constant,
}

/// Training hyperparameters shared by pretraining and fine-tuning.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: Schedule,
    pub seed: u64,
    /// Apply weight decay decoupled from the Adam moments instead of as
    /// an L2 term added to the gradient.
    #[serde(default)]
    pub decoupled_weight_decay: bool,
}

impl TrainConfig {
    pub fn new(learning_rate: f64, weight_decay: f64, epochs: usize, batch_size: usize) -> Self {
        Self {
            learning_rate,
            weight_decay,
            epochs,
            batch_size,
            schedule: Schedule::CosineToZero,
            seed: 0,
            decoupled_weight_decay: false,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        Ok(())
    }

    /// Learning rate for a (0-indexed) epoch.
    pub fn epoch_lr(&self, epoch: usize) -> Result<f64> {
        match self.schedule {
            Schedule::Constant => Ok(self.learning_rate),
            Schedule::CosineToZero => cosine_lr(epoch, self.epochs, self.learning_rate),
        }
    }

    /// Pretraining defaults: lr 5e-4, weight decay 1e-4, 300 epochs,
    /// batch 64, cosine-to-zero.
    pub fn pretrain_defaults() -> Self {
        Self::new(5e-4, 1e-4, 300, 64)
    }

    /// Fine-tuning defaults: lr 5e-5, weight decay 1e-4, 300 epochs,
    /// batch 64, cosine-to-zero.
    pub fn fine_tune_defaults() -> Self {
        Self::new(5e-5, 1e-4, 300, 64)
    }
}

/// Cosine annealing without restarts: `lr0 * 0.5 * (1 + cos(pi t / T))`.
pub fn cosine_lr(t: usize, total: usize, lr0: f64) -> Result<f64> {
    if total == 0 {
        return Err(Error::InvalidConfig("cosine schedule needs at least one step".into()));
    }
    if t > total {
        return Err(Error::InvalidConfig(format!("step {t} past schedule end {total}")));
    }
    Ok(lr0 * 0.5 * (1.0 + (std::f64::consts::PI * t as f64 / total as f64).cos()))
}

/// One bias-corrected Adam update over every parameter in the store.
///
/// Classic form: weight decay enters as an L2 term added to the
/// gradient. With `decoupled_weight_decay` the decay is applied
/// directly to the weights instead.
pub fn adam_step<F: Scalar>(store: &mut ParameterStore<F>, config: &TrainConfig, lr: f64) {
    store.step += 1;
    let t = store.step as i32;
    let beta1 = F::from_real(ADAM_BETA1);
    let beta2 = F::from_real(ADAM_BETA2);
    let eps = F::from_real(ADAM_EPS);
    let lr = F::from_real(lr);
    let wd = F::from_real(config.weight_decay);
    let one = F::one();
    let bias1 = one - beta1.powi(t);
    let bias2 = one - beta2.powi(t);
    let decoupled = config.decoupled_weight_decay;

    let names: Vec<String> = store.param_names().map(str::to_string).collect();
    for name in names {
        let p = store.param_mut(&name);
        ndarray::Zip::from(&mut p.data)
            .and(&p.grad)
            .and(&mut p.m)
            .and(&mut p.v)
            .for_each(|w, &grad, m, v| {
                let g = if decoupled { grad } else { grad + wd * *w };
                *m = beta1 * *m + (one - beta1) * g;
                *v = beta2 * *v + (one - beta2) * g * g;
                let m_hat = *m / bias1;
                let v_hat = *v / bias2;
                let mut update = m_hat / (v_hat.sqrt() + eps);
                if decoupled {
                    update = update + wd * *w;
                }
                *w = *w - lr * update;
            });
    }
}
