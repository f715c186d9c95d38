//! Mini-batch training with Adam.

use alloc::vec::Vec;

use rand::seq::SliceRandom;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use super::{LossParts, Real, Weights};
use crate::dataset::LabeledExample;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub w_cls: f64,
    pub w_seg: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 20,
            w_cls: 0.15,
            w_seg: 0.85,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.learning_rate >= 0.0) || !(self.epsilon > 0.0) {
            return bad("learning_rate must be >= 0 and epsilon > 0");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if !(self.w_cls >= 0.0 && self.w_seg >= 0.0) || (self.w_cls + self.w_seg - 1.0).abs() > 1e-9 {
            return bad("loss weights must be non-negative and sum to 1");
        }
        Ok(())
    }
}

/// Adam state: first and second moment estimates per parameter.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    m: Weights<T>,
    v: Weights<T>,
    step: i32,
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl<T: Real> Adam<T> {
    pub fn new(weights: &Weights<T>, cfg: &TrainConfig) -> Self {
        Adam {
            m: weights.same_shape_zeros(),
            v: weights.same_shape_zeros(),
            step: 0,
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
        }
    }

    /// One bias-corrected update of `weights` along `grad`.
    pub fn update(&mut self, weights: &mut Weights<T>, grad: &Weights<T>) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let (one, lr, eps) = (T::one(), T::of(self.lr), T::of(self.epsilon));
        let (c1, c2) = (T::of(c1), T::of(c2));
        let params = weights.tensors_mut();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for (((p, g), m), v) in params.into_iter().zip(grad.tensors()).zip(ms).zip(vs) {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (one - b1) * g[i];
                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] = p[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean over the epoch's examples, measured before each batch update.
    pub loss: f64,
    pub classification: f64,
    pub segmentation: f64,
}

fn zero_tensors<T: Real>(w: &mut Weights<T>) {
    for t in w.tensors_mut() {
        t.fill(T::zero());
    }
}

/// Trains `weights` in place for `cfg.epochs` passes over `data`, shuffling
/// into batches each epoch. Batch gradients are means over their examples.
pub fn train<T: Real>(
    weights: &mut Weights<T>,
    data: &[LabeledExample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<Vec<EpochLog>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let mut adam = Adam::new(weights, cfg);
    let mut grad = weights.same_shape_zeros();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut rng = crate::sub_rng(cfg.seed, epoch as u64);
        order.shuffle(&mut rng);
        let mut sum = LossParts::default();
        for batch in order.chunks(cfg.batch_size) {
            zero_tensors(&mut grad);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let e = &data[i];
                let x = weights.features(e)?;
                let trace = weights.forward(&x, e.len())?;
                let l = weights.backward(&x, &trace, e.class_label, &e.seg_labels, (cfg.w_cls, cfg.w_seg), scale, &mut grad)?;
                sum.total += l.total;
                sum.classification += l.classification;
                sum.segmentation += l.segmentation;
            }
            adam.update(weights, &grad);
        }
        let n = data.len() as f64;
        let entry = EpochLog {
            epoch,
            loss: sum.total / n,
            classification: sum.classification / n,
            segmentation: sum.segmentation / n,
        };
        on_epoch(&entry);
        log.push(entry);
    }
    Ok(log)
}

/// Mean joint loss of `weights` over `data` without updating anything.
pub fn mean_loss<T: Real>(weights: &Weights<T>, data: &[LabeledExample], cfg: &TrainConfig) -> Result<f64> {
    let mut sum = 0.0;
    for e in data {
        let x = weights.features(e)?;
        let t = weights.forward(&x, e.len())?;
        sum += super::joint_loss(t.class_logit(), t.seg_logits(), weights.config.classes(), e.class_label, &e.seg_labels, cfg.w_cls, cfg.w_seg).total;
    }
    Ok(sum / data.len().max(1) as f64)
}
