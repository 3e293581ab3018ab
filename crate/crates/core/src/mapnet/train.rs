use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::{architecture, Mode, RcNet};
use super::tensor::Tensor;
use crate::image::{ensure_same_dims, Plane};
use crate::oracle::MapKind;
use crate::{rng, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub patch: usize,
    pub stride: usize,
    pub batch: usize,
    pub learning_rate: f64,
    /// Steps over which the learning rate ramps linearly up from zero.
    pub warmup_steps: usize,
    pub momentum: f64,
    pub epochs: usize,
    pub dropout: f64,
    /// Channels of the first encoder stage; deeper stages use 2× and 4×.
    pub width: usize,
    /// Stops after this many optimizer steps even mid-epoch.
    pub max_steps: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            patch: 128,
            stride: 64,
            batch: 16,
            learning_rate: 1e-3,
            warmup_steps: 0,
            momentum: 0.9,
            epochs: 10,
            dropout: 0.5,
            width: 32,
            max_steps: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(Error::Config(format!("train.{m}")));
        if self.patch == 0 || self.patch % 4 != 0 {
            return err("patch must be a positive multiple of 4");
        }
        if self.stride == 0 {
            return err("stride must be positive");
        }
        if self.batch == 0 {
            return err("batch must be positive");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return err("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return err("momentum must lie in [0, 1)");
        }
        if self.epochs == 0 {
            return err("epochs must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return err("dropout must lie in [0, 1)");
        }
        if self.width == 0 {
            return err("width must be positive");
        }
        if self.max_steps == Some(0) {
            return err("max_steps must be positive when set");
        }
        Ok(())
    }
}

/// Aligned network input (linear luminance in [0, 1]) and label map.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub input: Plane,
    pub label: Plane,
}

fn to_tensor(p: &Plane) -> Tensor<f32> {
    Tensor::from_vec(1, p.height(), p.width(), p.data().iter().map(|&v| v as f32).collect())
}

fn prepare(patches: &[Patch]) -> Result<Vec<(Tensor<f32>, Tensor<f32>)>> {
    if patches.is_empty() {
        return Err(Error::InvalidInput("training corpus is empty".into()));
    }
    patches
        .iter()
        .enumerate()
        .map(|(i, p)| {
            ensure_same_dims(p.input.dims(), p.label.dims())?;
            if p.label.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::InvalidInput(format!("patch {i}: label outside [0, 1]")));
            }
            if p.input.data().iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("patch {i}: non-finite input")));
            }
            Ok((to_tensor(&p.input), to_tensor(&p.label)))
        })
        .collect()
}

/// Mean squared error between eval-mode predictions and labels.
pub fn evaluate_mse(net: &RcNet<f32>, patches: &[Patch]) -> Result<f64> {
    let data = prepare(patches)?;
    let mut total = 0.0;
    for (x, y) in &data {
        let out = net.forward(x)?;
        total += mse(&out, y);
    }
    Ok(total / data.len() as f64)
}

fn mse(out: &Tensor<f32>, label: &Tensor<f32>) -> f64 {
    let s: f64 = out
        .data
        .iter()
        .zip(&label.data)
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum();
    s / out.data.len() as f64
}

/// Minibatch SGD with momentum on the per-pixel mean squared error.
///
/// Initialization, shuffling and dropout draw from separate streams derived
/// from `cfg.seed`, so two runs with the same inputs give identical weights.
pub fn train(patches: &[Patch], map: MapKind, cfg: &TrainConfig) -> Result<RcNet<f32>> {
    cfg.validate()?;
    let data = prepare(patches)?;
    let mut net = RcNet::<f32>::new(map, architecture(cfg.width, cfg.dropout), rng::child_seed(cfg.seed, 0))?;
    let mut shuffle = rng::seeded(rng::child_seed(cfg.seed, 1));
    let mut drops = rng::seeded(rng::child_seed(cfg.seed, 2));
    let mut velocity = net.zero_grads();
    let mu = cfg.momentum as f32;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut step = 0usize;
    let mut epochs_run = 0;

    'outer: for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch) {
            if cfg.max_steps.is_some_and(|m| step >= m) {
                break;
            }
            let mut grads = net.zero_grads();
            let mut batch_loss = 0.0;
            let scale = 2.0 / chunk.len() as f32;
            for &i in chunk {
                let (x, y) = &data[i];
                let trace = net.forward_trace(x, Mode::Train(&mut drops))?;
                let out = trace.output();
                batch_loss += mse(out, y);
                let k = scale / out.data.len() as f32;
                let mut d = out.clone();
                for (g, &t) in d.data.iter_mut().zip(&y.data) {
                    *g = (*g - t) * k;
                }
                net.backward(&trace, d, &mut grads);
            }
            batch_loss /= chunk.len() as f64;
            if !batch_loss.is_finite() {
                return Err(Error::Diverged { step, loss: batch_loss });
            }
            let ramp = if step < cfg.warmup_steps {
                (step + 1) as f64 / cfg.warmup_steps as f64
            } else {
                1.0
            };
            let lr = (cfg.learning_rate * ramp) as f32;
            for ((p, v), g) in net.params.iter_mut().zip(&mut velocity).zip(&grads) {
                for ((w, vv), gg) in p.weights.iter_mut().zip(&mut v.weights).zip(&g.weights) {
                    *vv = mu * *vv - lr * gg;
                    *w += *vv;
                }
                for ((w, vv), gg) in p.bias.iter_mut().zip(&mut v.bias).zip(&g.bias) {
                    *vv = mu * *vv - lr * gg;
                    *w += *vv;
                }
            }
            if net.params.iter().any(|p| p.weights.iter().any(|w| !w.is_finite())) {
                return Err(Error::Diverged { step, loss: batch_loss });
            }
            step += 1;
            epoch_loss += batch_loss;
            batches += 1;
        }
        if batches == 0 {
            break 'outer;
        }
        epochs_run = epoch + 1;
        curve.push(epoch_loss / batches as f64);
        log::info!("{map}: epoch {} loss {:.6e} ({step} steps)", epoch + 1, curve[epoch]);
    }

    net.meta.seed = cfg.seed;
    net.meta.epochs = epochs_run;
    net.meta.steps = step;
    net.meta.learning_rate = cfg.learning_rate;
    net.meta.batch = cfg.batch;
    net.meta.patches = data.len();
    net.meta.loss_curve = curve;
    Ok(net)
}
