use serde::{Deserialize, Serialize};

use super::model::EmbeddingModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_models: usize,
    /// Learning-rate factor applied every `decay_every` epochs.
    pub lr_decay: f64,
    pub decay_every: usize,
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Restrict negative pairs to points on the same model.
    pub same_model_negatives: bool,
    /// Validate every this many epochs; 0 keeps the final parameters.
    pub validate_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_models: 4,
            lr_decay: 0.9,
            decay_every: 10,
            lambda: 1.0,
            epochs: 200,
            seed: 0,
            same_model_negatives: false,
            validate_every: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.lr, self.beta1, self.beta2, self.epsilon];
        if positive.iter().any(|v| !(*v > 0.0)) || self.beta1 >= 1.0 || self.beta2 >= 1.0 {
            return Err(Error::InvalidArgument(
                "lr and epsilon must be positive and betas in (0, 1)".into(),
            ));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::InvalidArgument("lr_decay must be in (0, 1]".into()));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidArgument(
                "lambda must be a finite non-negative number".into(),
            ));
        }
        if self.batch_models < 2 || self.decay_every == 0 {
            return Err(Error::InvalidArgument(
                "batch_models must be at least 2 and decay_every positive".into(),
            ));
        }
        Ok(())
    }

    /// Step size in effect during `epoch` (zero-based).
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        self.lr * self.lr_decay.powi((epoch / self.decay_every) as i32)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(parameters: usize) -> Self {
        AdamState {
            m: vec![0.0; parameters],
            v: vec![0.0; parameters],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update. Returns the step size used.
pub fn adam_step(
    model: &mut EmbeddingModel,
    gradient: &[f64],
    state: &mut AdamState,
    config: &TrainConfig,
    epoch: usize,
) -> Result<f64> {
    let n = model.parameter_count();
    if gradient.len() != n || state.m.len() != n || state.v.len() != n {
        return Err(Error::ShapeMismatch {
            expected: n,
            actual: gradient.len(),
        });
    }
    let lr = config.learning_rate(epoch);
    state.t += 1;
    let c1 = 1.0 - config.beta1.powi(state.t as i32);
    let c2 = 1.0 - config.beta2.powi(state.t as i32);
    let (b1, b2) = (config.beta1, config.beta2);
    for (((p, &g), m), v) in model
        .params_mut()
        .iter_mut()
        .zip(gradient)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + config.epsilon);
    }
    Ok(lr)
}
