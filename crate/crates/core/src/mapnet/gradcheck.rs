use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::model::{Layer, Mode, RcNet};
use super::ops;
use super::tensor::Tensor;
use crate::{rng, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GradCheckConfig {
    /// Side of the square random input.
    pub size: usize,
    pub step: f64,
    /// Weights sampled per convolution layer; biases are always all checked.
    pub weights_per_layer: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            size: 16,
            step: 1e-3,
            weights_per_layer: 256,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// (conv layer, parameter index) of the worst entry.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
    /// Entries whose finite-difference stencil crossed a ReLU or pooling
    /// switch, where the network is not differentiable.
    pub skipped: usize,
}

/// `|a - n| / max(|a|, |n|)`, and 0 when both vanish.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let d = analytic.abs().max(numeric.abs());
    if d == 0.0 {
        0.0
    } else {
        (analytic - numeric).abs() / d
    }
}

/// Compares back-propagated parameter gradients with central differences
/// of `L = sum((y - t)^2) / 2` for a random input `x` and target `t`.
/// Dropout layers use masks drawn once from the seed, or `masks` if given.
pub fn grad_check(net: &RcNet<f64>, cfg: &GradCheckConfig, masks: Option<&[Vec<f64>]>) -> Result<GradCheckReport> {
    net.validate()?;
    let mut r = rng::seeded(cfg.seed);
    let n = cfg.size * cfg.size;
    let x = Tensor::from_vec(1, cfg.size, cfg.size, (0..n).map(|_| r.random::<f64>()).collect());
    let target: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();

    let drawn;
    let masks = match masks {
        Some(m) => m,
        None => {
            let sizes = dropout_sizes(net, cfg.size)?;
            drawn = sizes
                .iter()
                .map(|&(len, rate)| ops::dropout_mask::<f64, _>(len, rate, &mut r))
                .collect::<Vec<_>>();
            &drawn
        }
    };

    let loss = |net: &RcNet<f64>| -> Result<(f64, Vec<u8>)> {
        let t = net.forward_trace(&x, Mode::Fixed(masks))?;
        let l = t.output().data.iter().zip(&target).map(|(y, t)| 0.5 * (y - t) * (y - t)).sum();
        Ok((l, t.signature(&net.layers)))
    };

    let trace = net.forward_trace(&x, Mode::Fixed(masks))?;
    let base_sig = trace.signature(&net.layers);
    let mut d_out = trace.output().clone();
    for (g, t) in d_out.data.iter_mut().zip(&target) {
        *g -= t;
    }
    let mut grads = net.zero_grads();
    net.backward(&trace, d_out, &mut grads);

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        skipped: 0,
    };
    let mut probe = net.clone();
    for (k, p) in net.params.iter().enumerate() {
        let nw = p.weights.len();
        let mut picks: Vec<usize> = if cfg.weights_per_layer >= nw {
            (0..nw).collect()
        } else {
            index::sample(&mut r, nw, cfg.weights_per_layer).into_vec()
        };
        picks.sort_unstable();
        picks.extend(nw..p.len());
        for i in picks {
            let orig = p.get(i);
            *probe.params[k].get_mut(i) = orig + cfg.step;
            let (lp, sp) = loss(&probe)?;
            *probe.params[k].get_mut(i) = orig - cfg.step;
            let (lm, sm) = loss(&probe)?;
            *probe.params[k].get_mut(i) = orig;
            if sp != base_sig || sm != base_sig {
                report.skipped += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * cfg.step);
            let e = relative_error(grads[k].get(i), numeric);
            report.checked += 1;
            if e > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(e);
                report.worst = Some((k, i));
            }
        }
    }
    Ok(report)
}

/// (element count, rate) of every dropout layer for a `size`×`size` input.
pub fn dropout_sizes(net: &RcNet<f64>, size: usize) -> Result<Vec<(usize, f64)>> {
    let t = net.forward_trace(&Tensor::zeros(1, size, size), Mode::Eval)?;
    Ok(net
        .layers
        .iter()
        .enumerate()
        .filter_map(|(i, l)| match *l {
            Layer::Dropout { rate } => Some((t.outputs[i].data.len(), rate)),
            _ => None,
        })
        .collect())
}
