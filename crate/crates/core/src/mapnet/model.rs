use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ops;
use super::tensor::{Real, Tensor};
use crate::oracle::MapKind;
use crate::{rng, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Layer {
    Conv3x3 { c_in: usize, c_out: usize },
    Relu,
    Maxpool2,
    Upsample2,
    /// Appends the output of layer `from` after the current channels.
    ConcatSkip { from: usize },
    Dropout { rate: f64 },
    Conv1x1 { c_in: usize, c_out: usize },
    Sigmoid,
}

impl Layer {
    fn conv_shape(&self) -> Option<(usize, usize, usize)> {
        match *self {
            Layer::Conv3x3 { c_in, c_out } => Some((c_in, c_out, 9)),
            Layer::Conv1x1 { c_in, c_out } => Some((c_in, c_out, 1)),
            _ => None,
        }
    }
}

/// Encoder-decoder with two pooling stages and two skip connections.
/// `width` is the channel count of the first stage; the standard network
/// uses 32.
pub fn architecture(width: usize, dropout: f64) -> Vec<Layer> {
    let (a, b, c) = (width, 2 * width, 4 * width);
    vec![
        Layer::Conv3x3 { c_in: 1, c_out: a },
        Layer::Relu,
        Layer::Maxpool2,
        Layer::Conv3x3 { c_in: a, c_out: b },
        Layer::Relu,
        Layer::Maxpool2,
        Layer::Conv3x3 { c_in: b, c_out: c },
        Layer::Relu,
        Layer::Dropout { rate: dropout },
        Layer::Upsample2,
        Layer::ConcatSkip { from: 4 },
        Layer::Conv3x3 { c_in: c + b, c_out: b },
        Layer::Relu,
        Layer::Upsample2,
        Layer::ConcatSkip { from: 1 },
        Layer::Conv3x3 { c_in: b + a, c_out: a },
        Layer::Relu,
        Layer::Conv1x1 { c_in: a, c_out: 1 },
        Layer::Sigmoid,
    ]
}

/// Walks the layer list tracking channel count and pooling depth.
/// Returns the deepest pooling level reached.
pub fn check_layers(layers: &[Layer]) -> Result<usize> {
    let bad = |i: usize, msg: String| Error::InvalidInput(format!("layer {i}: {msg}"));
    let mut shapes: Vec<(usize, usize)> = Vec::with_capacity(layers.len());
    let (mut c, mut level, mut deepest) = (1usize, 0usize, 0usize);
    for (i, layer) in layers.iter().enumerate() {
        match *layer {
            Layer::Conv3x3 { c_in, c_out } | Layer::Conv1x1 { c_in, c_out } => {
                if c_in != c {
                    return Err(bad(i, format!("expects {c_in} channels, receives {c}")));
                }
                if c_out == 0 {
                    return Err(bad(i, "zero output channels".into()));
                }
                c = c_out;
            }
            Layer::Maxpool2 => {
                level += 1;
                deepest = deepest.max(level);
            }
            Layer::Upsample2 => {
                if level == 0 {
                    return Err(bad(i, "upsampling above input resolution".into()));
                }
                level -= 1;
            }
            Layer::ConcatSkip { from } => {
                if from >= i {
                    return Err(bad(i, format!("skip source {from} is not an earlier layer")));
                }
                let (fc, fl) = shapes[from];
                if fl != level {
                    return Err(bad(i, format!("skip source {from} has a different resolution")));
                }
                c += fc;
            }
            Layer::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(bad(i, format!("dropout rate {rate} outside [0, 1)")));
                }
            }
            Layer::Relu | Layer::Sigmoid => {}
        }
        shapes.push((c, level));
    }
    if (c, level) != (1, 0) {
        return Err(Error::InvalidInput(format!(
            "network output has {c} channels at pooling level {level}; expected 1 at level 0"
        )));
    }
    Ok(deepest)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvParams<T> {
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> ConvParams<T> {
    pub fn zeros_like(&self) -> Self {
        Self {
            weights: vec![T::zero(); self.weights.len()],
            bias: vec![T::zero(); self.bias.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> T {
        if i < self.weights.len() {
            self.weights[i]
        } else {
            self.bias[i - self.weights.len()]
        }
    }

    pub fn get_mut(&mut self, i: usize) -> &mut T {
        let n = self.weights.len();
        if i < n {
            &mut self.weights[i]
        } else {
            &mut self.bias[i - n]
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub seed: u64,
    pub epochs: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub batch: usize,
    pub patches: usize,
    /// Mean training loss of each epoch.
    pub loss_curve: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RcNet<T = f32> {
    pub map: MapKind,
    pub layers: Vec<Layer>,
    /// One entry per convolution layer, in layer order.
    pub params: Vec<ConvParams<T>>,
    pub meta: TrainMeta,
}

/// How dropout layers behave during a forward pass.
pub enum Mode<'a, T> {
    Eval,
    Train(&'a mut rng::Rng),
    /// Explicit masks, one per dropout layer in order.
    Fixed(&'a [Vec<T>]),
}

/// Everything the backward pass needs from a forward pass.
pub struct Trace<T> {
    pub input: Tensor<T>,
    pub outputs: Vec<Tensor<T>>,
    argmax: Vec<Vec<u8>>,
    masks: Vec<Vec<T>>,
}

impl<T: Real> Trace<T> {
    pub fn output(&self) -> &Tensor<T> {
        self.outputs.last().expect("network has layers")
    }

    /// Dropout masks that were applied, one per dropout layer.
    pub fn dropout_masks(&self, layers: &[Layer]) -> Vec<Vec<T>> {
        layers
            .iter()
            .zip(&self.masks)
            .filter(|(l, _)| matches!(l, Layer::Dropout { .. }))
            .map(|(_, m)| m.clone())
            .collect()
    }

    /// ReLU activity pattern and pooling routes. Two passes with equal
    /// signatures lie on the same piecewise-smooth region of the network.
    pub fn signature(&self, layers: &[Layer]) -> Vec<u8> {
        let mut sig = Vec::new();
        for (i, layer) in layers.iter().enumerate() {
            match layer {
                Layer::Relu => sig.extend(self.outputs[i].data.iter().map(|&v| (v > T::zero()) as u8)),
                Layer::Maxpool2 => sig.extend_from_slice(&self.argmax[i]),
                _ => {}
            }
        }
        sig
    }
}

impl<T: Real> RcNet<T> {
    /// He-initialized network (normal, std `sqrt(2 / fan_in)`, zero bias).
    pub fn new(map: MapKind, layers: Vec<Layer>, seed: u64) -> Result<Self> {
        check_layers(&layers)?;
        let mut r = rng::seeded(seed);
        let params = layers
            .iter()
            .filter_map(Layer::conv_shape)
            .map(|(c_in, c_out, taps)| {
                let fan_in = (c_in * taps) as f64;
                let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
                ConvParams {
                    weights: (0..c_out * c_in * taps).map(|_| T::of(normal.sample(&mut r))).collect(),
                    bias: vec![T::zero(); c_out],
                }
            })
            .collect();
        Ok(Self {
            map,
            layers,
            params,
            meta: TrainMeta {
                seed,
                ..TrainMeta::default()
            },
        })
    }

    pub fn standard(map: MapKind, seed: u64) -> Result<Self> {
        Self::new(map, architecture(32, 0.5), seed)
    }

    /// Checks the layer chain and that every parameter tensor fits its layer.
    pub fn validate(&self) -> Result<()> {
        check_layers(&self.layers)?;
        let shapes: Vec<_> = self.layers.iter().filter_map(Layer::conv_shape).collect();
        if shapes.len() != self.params.len() {
            return Err(Error::InvalidInput(format!(
                "{} convolution layers but {} parameter sets",
                shapes.len(),
                self.params.len()
            )));
        }
        for (k, ((c_in, c_out, taps), p)) in shapes.iter().zip(&self.params).enumerate() {
            if p.weights.len() != c_in * c_out * taps || p.bias.len() != *c_out {
                return Err(Error::InvalidInput(format!("parameter set {k} does not match its layer")));
            }
            if p.weights.iter().chain(&p.bias).any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("parameter set {k} has non-finite values")));
            }
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(ConvParams::len).sum()
    }

    pub fn zero_grads(&self) -> Vec<ConvParams<T>> {
        self.params.iter().map(ConvParams::zeros_like).collect()
    }

    pub fn cast<U: Real>(&self) -> RcNet<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::of(x.as_f64())).collect();
        RcNet {
            map: self.map,
            layers: self.layers.clone(),
            params: self
                .params
                .iter()
                .map(|p| ConvParams {
                    weights: conv(&p.weights),
                    bias: conv(&p.bias),
                })
                .collect(),
            meta: self.meta.clone(),
        }
    }

    fn pooling_factor(&self) -> usize {
        1 << self.layers.iter().filter(|l| matches!(l, Layer::Maxpool2)).count()
    }

    pub fn forward_trace(&self, x: &Tensor<T>, mut mode: Mode<'_, T>) -> Result<Trace<T>> {
        let f = self.pooling_factor();
        if x.c != 1 || x.h % f != 0 || x.w % f != 0 || x.h == 0 || x.w == 0 {
            return Err(Error::InvalidInput(format!(
                "network input must be 1 channel with sides divisible by {f}, got {:?}",
                x.shape()
            )));
        }
        let n = self.layers.len();
        let mut outputs: Vec<Tensor<T>> = Vec::with_capacity(n);
        let mut argmax = vec![Vec::new(); n];
        let mut masks = vec![Vec::new(); n];
        let (mut conv_k, mut drop_k) = (0, 0);
        for (i, layer) in self.layers.iter().enumerate() {
            let input = if i == 0 { x } else { &outputs[i - 1] };
            let y = match *layer {
                Layer::Conv3x3 { .. } => {
                    let p = &self.params[conv_k];
                    conv_k += 1;
                    ops::conv3x3(input, &p.weights, &p.bias)?
                }
                Layer::Conv1x1 { .. } => {
                    let p = &self.params[conv_k];
                    conv_k += 1;
                    ops::conv1x1(input, &p.weights, &p.bias)?
                }
                Layer::Relu => ops::relu(input),
                Layer::Sigmoid => ops::sigmoid(input),
                Layer::Maxpool2 => {
                    let (y, a) = ops::maxpool2(input)?;
                    argmax[i] = a;
                    y
                }
                Layer::Upsample2 => ops::upsample2(input),
                Layer::ConcatSkip { from } => ops::concat(input, &outputs[from])?,
                Layer::Dropout { rate } => {
                    let mask = match &mut mode {
                        Mode::Eval => None,
                        Mode::Train(r) => Some(ops::dropout_mask(input.data.len(), rate, &mut **r)),
                        Mode::Fixed(ms) => {
                            let m = ms.get(drop_k).ok_or_else(|| {
                                Error::InvalidInput(format!("no fixed mask for dropout layer {drop_k}"))
                            })?;
                            if m.len() != input.data.len() {
                                return Err(Error::InvalidInput("fixed dropout mask has the wrong size".into()));
                            }
                            Some(m.clone())
                        }
                    };
                    drop_k += 1;
                    match mask {
                        Some(m) => {
                            let y = ops::apply_mask(input, &m);
                            masks[i] = m;
                            y
                        }
                        None => input.clone(),
                    }
                }
            };
            outputs.push(y);
        }
        Ok(Trace {
            input: x.clone(),
            outputs,
            argmax,
            masks,
        })
    }

    /// Eval-mode inference.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut t = self.forward_trace(x, Mode::Eval)?;
        Ok(t.outputs.pop().expect("network has layers"))
    }

    /// Back-propagates `d_out` (gradient of the loss with respect to the
    /// network output) and adds parameter gradients into `grads`.
    pub fn backward(&self, trace: &Trace<T>, d_out: Tensor<T>, grads: &mut [ConvParams<T>]) {
        let n = self.layers.len();
        let mut g: Vec<Option<Tensor<T>>> = vec![None; n];
        g[n - 1] = Some(d_out);
        let mut conv_k = self.params.len();
        let accumulate = |slot: &mut Option<Tensor<T>>, d: Tensor<T>| match slot {
            Some(t) => {
                for (a, b) in t.data.iter_mut().zip(&d.data) {
                    *a = *a + *b;
                }
            }
            None => *slot = Some(d),
        };
        for i in (0..n).rev() {
            let layer = self.layers[i];
            if layer.conv_shape().is_some() {
                conv_k -= 1;
            }
            let Some(gy) = g[i].take() else { continue };
            let input = if i == 0 { &trace.input } else { &trace.outputs[i - 1] };
            let want_dx = i > 0;
            let dx = match layer {
                Layer::Conv3x3 { .. } => {
                    let gr = &mut grads[conv_k];
                    ops::conv3x3_backward(input, &self.params[conv_k].weights, &gy, &mut gr.weights, &mut gr.bias, want_dx)
                }
                Layer::Conv1x1 { .. } => {
                    let gr = &mut grads[conv_k];
                    ops::conv1x1_backward(input, &self.params[conv_k].weights, &gy, &mut gr.weights, &mut gr.bias, want_dx)
                }
                Layer::Relu => Some(ops::relu_backward(&trace.outputs[i], &gy)),
                Layer::Sigmoid => Some(ops::sigmoid_backward(&trace.outputs[i], &gy)),
                Layer::Maxpool2 => Some(ops::maxpool2_backward(&gy, &trace.argmax[i])),
                Layer::Upsample2 => Some(ops::upsample2_backward(&gy)),
                Layer::ConcatSkip { from } => {
                    let (main, skip) = ops::concat_backward(&gy, input.c);
                    accumulate(&mut g[from], skip);
                    Some(main)
                }
                Layer::Dropout { .. } => {
                    if trace.masks[i].is_empty() {
                        Some(gy)
                    } else {
                        Some(ops::apply_mask(&gy, &trace.masks[i]))
                    }
                }
            };
            if let (Some(d), true) = (dx, want_dx) {
                accumulate(&mut g[i - 1], d);
            }
        }
    }
}

impl RcNet<f32> {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let net: Self = serde_json::from_str(s)?;
        net.validate()?;
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}
