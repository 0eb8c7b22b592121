//! Mean-squared-error loss and momentum SGD.

use super::{Real, Tensor, UpsamplerNet};
use crate::error::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Global L2 norm the gradient is clipped to; zero disables clipping.
    pub clip_norm: f64,
    /// Epochs without validation improvement before stopping; zero disables.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.05,
            momentum: 0.9,
            batch: 16,
            epochs: 50,
            seed: 1,
            clip_norm: 1.0,
            patience: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be finite and non-negative, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if self.batch == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Network input and residual target. The target may be smaller than the
/// network output; it is then compared against the output window at `crop`.
#[derive(Debug, Clone)]
pub struct Sample<T> {
    pub x: Tensor<T>,
    pub target: Tensor<T>,
    pub crop: (usize, usize),
}

fn sample_loss_and_grads<T: Real>(net: &UpsamplerNet<T>, s: &Sample<T>) -> Result<(f64, Vec<Tensor<T>>)> {
    let (out, cache) = net.forward_cached(&s.x)?;
    let (c, oh, ow) = out.chw()?;
    let (tc, th, tw) = s.target.chw()?;
    let (top, left) = s.crop;
    if tc != c || top + th > oh || left + tw > ow {
        return Err(Error::arg(format!(
            "target {:?} at {:?} does not fit output {:?}",
            s.target.shape(),
            s.crop,
            out.shape()
        )));
    }
    let n = (tc * th * tw) as f64;
    let scale = T::of(2.0 / n);
    let mut d_out = Tensor::zeros(out.shape());
    let mut loss = 0.0;
    for k in 0..c {
        for r in 0..th {
            for q in 0..tw {
                let oi = (k * oh + top + r) * ow + left + q;
                let e = out.data()[oi] - s.target.data()[(k * th + r) * tw + q];
                loss += e.f64() * e.f64();
                d_out.data_mut()[oi] = e * scale;
            }
        }
    }
    let grads = net.backward(&cache, &d_out)?;
    Ok((loss / n, grads))
}

/// Mean loss over a batch and the gradient of that mean. Samples are
/// processed in parallel but reduced in order, so the result does not depend
/// on the thread count.
pub fn batch_loss_and_grads<T: Real>(net: &UpsamplerNet<T>, batch: &[Sample<T>]) -> Result<(f64, Vec<Tensor<T>>)> {
    if batch.is_empty() {
        return Err(Error::arg("empty batch"));
    }
    let parts: Vec<(f64, Vec<Tensor<T>>)> = batch
        .par_iter()
        .map(|s| sample_loss_and_grads(net, s))
        .collect::<Result<_>>()?;
    let inv = T::of(1.0 / batch.len() as f64);
    let mut iter = parts.into_iter();
    let (mut loss, mut grads) = iter.next().expect("non-empty");
    for (l, g) in iter {
        loss += l;
        for (a, b) in grads.iter_mut().zip(&g) {
            a.add_assign(b)?;
        }
    }
    for g in &mut grads {
        for v in g.data_mut() {
            *v = *v * inv;
        }
    }
    Ok((loss / batch.len() as f64, grads))
}

/// Optimiser state for one network.
#[derive(Debug, Clone)]
pub struct Trainer<T> {
    pub cfg: TrainConfig,
    velocity: Vec<Tensor<T>>,
    pub epoch: usize,
    steps: usize,
}

impl<T: Real> Trainer<T> {
    pub fn new(net: &UpsamplerNet<T>, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Trainer {
            cfg,
            velocity: net.params().iter().map(|p| Tensor::zeros(p.shape())).collect(),
            epoch: 0,
            steps: 0,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// One SGD step on `batch`; returns the batch loss before the update.
    pub fn backward_and_step(&mut self, net: &mut UpsamplerNet<T>, batch: &[Sample<T>]) -> Result<f64> {
        let (loss, mut grads) = batch_loss_and_grads(net, batch)?;
        let norm = grads.iter().map(Tensor::sum_sq).sum::<f64>().sqrt();
        if !loss.is_finite() || !norm.is_finite() {
            return Err(Error::Diverged {
                epoch: self.epoch,
                batch: self.steps,
                loss,
            });
        }
        if self.cfg.clip_norm > 0.0 && norm > self.cfg.clip_norm {
            let s = T::of(self.cfg.clip_norm / norm);
            for g in &mut grads {
                for v in g.data_mut() {
                    *v = *v * s;
                }
            }
        }
        let mu = T::of(self.cfg.momentum);
        let lr = T::of(self.cfg.lr);
        for ((p, v), g) in net.params_mut().iter_mut().zip(&mut self.velocity).zip(&grads) {
            for ((pv, vv), &gv) in p.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
                *vv = mu * *vv + gv;
                *pv = *pv - lr * *vv;
            }
        }
        self.steps += 1;
        Ok(loss)
    }
}
