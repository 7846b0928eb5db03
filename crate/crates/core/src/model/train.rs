//! Minibatch training with Adam or SGD, global-norm gradient clipping, and
//! divergence recovery.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{backward, forward, loss, ModelSpec, Parameters, SequenceBatch};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub gradient_clip_norm: Option<f64>,
    /// Seeds minibatch shuffling and dropout masks.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 30,
            optimizer: OptimizerKind::Adam,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            gradient_clip_norm: Some(5.0),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::InvalidInput(
                "learning rate must be finite and >= 0".into(),
            ));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidInput(
                "batch size and epochs must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::InvalidInput("adam betas must lie in [0, 1)".into()));
        }
        if self.adam_epsilon.is_nan() || self.adam_epsilon <= 0.0 {
            return Err(Error::InvalidInput("adam epsilon must be positive".into()));
        }
        if let Some(c) = self.gradient_clip_norm {
            if c.is_nan() || c <= 0.0 {
                return Err(Error::InvalidInput("clip norm must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Trained parameters plus the per-epoch mean training loss.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: Parameters,
    pub loss_curve: Vec<f64>,
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

/// Train on the full batch with shuffled minibatches. Deterministic for a
/// fixed seed. A non-finite loss aborts with the last parameters that ended
/// an epoch with finite losses.
pub fn train(
    params: Parameters,
    spec: &ModelSpec,
    cfg: &TrainConfig,
    data: &SequenceBatch,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    spec.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidInput("empty training set".into()));
    }

    let n = data.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut theta = params.to_flat();
    let mut adam = AdamState {
        m: vec![0.0; theta.len()],
        v: vec![0.0; theta.len()],
        step: 0,
    };
    let mut last_good = params;
    let mut current = last_good.clone();
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut indices: Vec<usize> = (0..n).collect();

    for epoch in 0..cfg.epochs {
        indices.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in indices.chunks(cfg.batch_size) {
            let minibatch = data.select(chunk);
            let (outputs, cache) = forward(&current, spec, &minibatch.inputs, true, &mut rng)?;
            let batch_loss = loss(&outputs, &minibatch.targets, &spec.head)?;
            if !batch_loss.is_finite() {
                return Err(Error::TrainingDiverged {
                    epoch,
                    last_good: Box::new(last_good),
                });
            }
            epoch_loss += batch_loss * chunk.len() as f64;
            let grads = backward(&current, spec, &minibatch, &cache)?;
            let mut g = grads.to_flat();
            if let Some(clip) = cfg.gradient_clip_norm {
                let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > clip {
                    let scale = clip / norm;
                    g.iter_mut().for_each(|v| *v *= scale);
                }
            }
            apply_update(&mut theta, &g, cfg, &mut adam);
            current = Parameters::from_flat(spec, &theta)?;
        }
        curve.push(epoch_loss / n as f64);
        last_good = current.clone();
    }

    Ok(TrainOutcome {
        params: last_good,
        loss_curve: curve,
    })
}

fn apply_update(theta: &mut [f64], g: &[f64], cfg: &TrainConfig, adam: &mut AdamState) {
    match cfg.optimizer {
        OptimizerKind::Sgd => {
            for (t, gi) in theta.iter_mut().zip(g.iter()) {
                *t -= cfg.learning_rate * gi;
            }
        }
        OptimizerKind::Adam => {
            adam.step += 1;
            let b1 = cfg.adam_beta1;
            let b2 = cfg.adam_beta2;
            let bc1 = 1.0 - b1.powi(adam.step as i32);
            let bc2 = 1.0 - b2.powi(adam.step as i32);
            for (((t, gi), m), v) in theta
                .iter_mut()
                .zip(g.iter())
                .zip(adam.m.iter_mut())
                .zip(adam.v.iter_mut())
            {
                *m = b1 * *m + (1.0 - b1) * gi;
                *v = b2 * *v + (1.0 - b2) * gi * gi;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *t -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_epsilon);
            }
        }
    }
}
