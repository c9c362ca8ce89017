//! Deterministic mini-batch AdamW training.

use std::f64::consts::PI;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use spancal_core::rng::derive_rng;

use crate::encode::{resample, Encoded};
use crate::heads::{calibration_loss, LossBreakdown, LossWeights};
use crate::params::ModelParams;
use crate::ModelError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub weight_decay: f64,
    /// Fraction of steps with linear warm-up.
    pub warmup: f64,
    /// Hard restarts of the cosine schedule.
    pub cycles: usize,
    /// Global gradient-norm clip; 0 disables.
    pub clip: f64,
    /// Negative pairs per example for the span-matching loss.
    pub negatives: usize,
    pub mlm_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            lr: 1e-3,
            batch_size: 16,
            seed: 0,
            weight_decay: 0.01,
            warmup: 0.1,
            cycles: 1,
            clip: 1.0,
            negatives: 8,
            mlm_rate: 0.05,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_owned()));
        if self.batch_size == 0 || self.cycles == 0 {
            return bad("batch_size and cycles must be positive");
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) || self.weight_decay < 0.0 || self.clip < 0.0 {
            return bad("lr, weight_decay and clip must be non-negative");
        }
        if !(0.0..1.0).contains(&self.warmup) || !(0.0..=1.0).contains(&self.mlm_rate) {
            return bad("warmup must be in [0,1) and mlm_rate in [0,1]");
        }
        Ok(())
    }
}

/// Learning rate at `step` (0-based) of `total`: linear warm-up, then cosine
/// decay with `cycles` hard restarts.
pub fn lr_at(cfg: &TrainConfig, step: usize, total: usize) -> f64 {
    let warm = (cfg.warmup * total as f64).ceil() as usize;
    if step < warm {
        return cfg.lr * (step + 1) as f64 / warm as f64;
    }
    let span = total.saturating_sub(warm).max(1);
    let progress = (step - warm) as f64 / span as f64;
    let phase = (cfg.cycles as f64 * progress) % 1.0;
    cfg.lr * 0.5 * (1.0 + (PI * phase).cos())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub steps: usize,
    pub lr: f64,
    pub loss: LossBreakdown,
}

struct AdamW {
    m: ModelParams,
    v: ModelParams,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl AdamW {
    fn new(p: &ModelParams) -> Self {
        Self { m: p.zeros_like(), v: p.zeros_like(), t: 0 }
    }

    /// Decoupled weight decay applies to matrices only.
    fn step(&mut self, p: &mut ModelParams, g: &ModelParams, lr: f64, wd: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        let views = p.tensors_mut().into_iter().zip(g.tensors()).zip(self.m.tensors_mut()).zip(self.v.tensors_mut());
        for ((((_, mut w), (_, gr)), (_, mut m)), (_, mut v)) in views {
            let decay = if w.ndim() == 2 { wd } else { 0.0 };
            ndarray::Zip::from(&mut w).and(&gr).and(&mut m).and(&mut v).for_each(|w, &g, m, v| {
                *m = BETA1 * *m + (1.0 - BETA1) * g;
                *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                let update = (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
                *w -= lr * (update + decay * *w);
            });
        }
    }
}

/// Runs the shuffled mini-batch loop. `objective(params, index, rng, grads,
/// scale)` returns the loss of item `index` and accumulates its gradient
/// times `scale`; `rng` is keyed by epoch and item.
pub fn train_loop<F>(mut params: ModelParams, n_items: usize, cfg: &TrainConfig, mut objective: F) -> Result<(ModelParams, Vec<EpochLog>), ModelError>
where
    F: FnMut(&ModelParams, usize, &mut ChaCha8Rng, &mut ModelParams, f64) -> Result<LossBreakdown, ModelError>,
{
    cfg.validate()?;
    if n_items == 0 {
        return Err(ModelError::Data("empty training set".into()));
    }
    let steps_per_epoch = n_items.div_ceil(cfg.batch_size);
    let total = steps_per_epoch * cfg.epochs;
    let mut opt = AdamW::new(&params);
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..n_items).collect();
        order.shuffle(&mut derive_rng(cfg.seed, &format!("shuffle/{epoch}")));
        let mut sum = LossBreakdown::default();
        let mut lr = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = params.zeros_like();
            let scale = 1.0 / batch.len() as f64;
            let mut batch_loss = LossBreakdown::default();
            for &i in batch {
                let mut rng = derive_rng(cfg.seed, &format!("item/{epoch}/{i}"));
                match objective(&params, i, &mut rng, &mut grads, scale) {
                    Ok(l) => batch_loss.add(&l),
                    Err(ModelError::NonFinite) => {
                        batch_loss.l_total = f64::NAN;
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
            let norm = grads.sq_norm().sqrt();
            if !batch_loss.l_total.is_finite() || !norm.is_finite() {
                return Err(ModelError::Diverged {
                    epoch,
                    step,
                    last_good: Box::new(params),
                });
            }
            if cfg.clip > 0.0 && norm > cfg.clip {
                grads.scale(cfg.clip / norm);
            }
            lr = lr_at(cfg, step, total);
            let before = params.clone();
            opt.step(&mut params, &grads, lr, cfg.weight_decay);
            if !params.is_finite() {
                return Err(ModelError::Diverged {
                    epoch,
                    step,
                    last_good: Box::new(before),
                });
            }
            sum.add(&batch_loss);
            step += 1;
        }
        let entry = EpochLog {
            epoch,
            steps: steps_per_epoch,
            lr,
            loss: sum.scaled(1.0 / n_items as f64),
        };
        info!("epoch {epoch}: loss {:.5}", entry.loss.l_total);
        debug!("{entry:?}");
        log.push(entry);
    }
    Ok((params, log))
}

/// Trains the calibration heads. Negatives and MLM masks are redrawn for
/// every epoch.
pub fn fit(
    params: ModelParams,
    data: &[Encoded],
    weights: &LossWeights,
    cfg: &TrainConfig,
) -> Result<(ModelParams, Vec<EpochLog>), ModelError> {
    weights.validate()?;
    let vocab = params.config.vocab_size;
    let mlm_rate = if weights.mlm > 0.0 { cfg.mlm_rate } else { 0.0 };
    train_loop(params, data.len(), cfg, |p, i, rng, grads, scale| {
        let enc = resample(&data[i], cfg.negatives, mlm_rate, vocab, rng);
        calibration_loss(p, &enc, weights, Some((grads, scale)))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_shape() {
        let cfg = TrainConfig { lr: 1.0, warmup: 0.1, cycles: 1, ..Default::default() };
        assert!((lr_at(&cfg, 0, 100) - 0.1).abs() < 1e-12);
        assert!((lr_at(&cfg, 9, 100) - 1.0).abs() < 1e-12);
        assert!((lr_at(&cfg, 10, 100) - 1.0).abs() < 1e-12);
        assert!(lr_at(&cfg, 99, 100) < 0.01);
        let two = TrainConfig { cycles: 2, ..cfg };
        // restart at the midpoint of the decay phase
        assert!(lr_at(&two, 54, 100) < 0.01);
        assert!((lr_at(&two, 55, 100) - 1.0).abs() < 1e-12);
    }
}
