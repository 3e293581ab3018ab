//! Layer kernels with their hand-written backward passes.
//!
//! Convolutions run on a zero-padded copy of the input whose rows are
//! `w + 2` wide. Shifting a flat view of that buffer by `dy * (w + 2) + dx`
//! turns each of the nine kernel taps into one matrix product; the two
//! extra columns per output row are junk and get dropped (or zeroed on the
//! way back).


use super::tensor::{Gemm, Real, Tensor};
use crate::{Error, Result};

fn shape_err(msg: String) -> Error {
    Error::InvalidInput(msg)
}

/// Per-channel stride of the padded buffer. Two slack elements keep the
/// bottom-right tap's view in bounds.
#[inline]
fn padded_stride(h: usize, w: usize) -> usize {
    (h + 2) * (w + 2) + 2
}

fn pad<T: Real>(x: &Tensor<T>) -> Vec<T> {
    let (c, h, w) = x.shape();
    let s = padded_stride(h, w);
    let mut p = vec![T::zero(); c * s];
    for ch in 0..c {
        let src = x.channel(ch);
        for y in 0..h {
            let dst = ch * s + (y + 1) * (w + 2) + 1;
            p[dst..dst + w].copy_from_slice(&src[y * w..(y + 1) * w]);
        }
    }
    p
}

/// 3×3 cross-correlation with zero padding 1. `weights` is
/// `(c_out, c_in, 3, 3)` row-major.
pub fn conv3x3<T: Real>(x: &Tensor<T>, weights: &[T], bias: &[T]) -> Result<Tensor<T>> {
    let (c_in, h, w) = x.shape();
    let c_out = bias.len();
    if weights.len() != c_out * c_in * 9 {
        return Err(shape_err(format!(
            "conv3x3: {} weights do not fit ({c_out}, {c_in}, 3, 3)",
            weights.len()
        )));
    }
    let s = padded_stride(h, w);
    let wp = w + 2;
    let n = h * wp;
    let p = pad(x);
    let mut ext = vec![T::zero(); c_out * n];
    for (o, row) in ext.chunks_mut(n).enumerate() {
        row.fill(bias[o]);
    }
    for tap in 0..9 {
        let (dy, dx) = (tap / 3, tap % 3);
        T::gemm(
            Gemm {
                m: c_out,
                k: c_in,
                n,
                a: (tap, c_in * 9, 9),
                b: (dy * wp + dx, s, 1),
                c: (0, n, 1),
            },
            T::one(),
            weights,
            &p,
            T::one(),
            &mut ext,
        );
    }
    let mut out = Tensor::zeros(c_out, h, w);
    for o in 0..c_out {
        for y in 0..h {
            let src = o * n + y * wp;
            let dst = (o * h + y) * w;
            out.data[dst..dst + w].copy_from_slice(&ext[src..src + w]);
        }
    }
    Ok(out)
}

/// Accumulates weight and bias gradients into `dw`/`db` and returns the
/// input gradient when `want_dx` is set.
pub fn conv3x3_backward<T: Real>(
    x: &Tensor<T>,
    weights: &[T],
    dy: &Tensor<T>,
    dw: &mut [T],
    db: &mut [T],
    want_dx: bool,
) -> Option<Tensor<T>> {
    let (c_in, h, w) = x.shape();
    let c_out = dy.c;
    debug_assert_eq!((dy.h, dy.w), (h, w));
    let s = padded_stride(h, w);
    let wp = w + 2;
    let n = h * wp;
    let p = pad(x);
    let mut dext = vec![T::zero(); c_out * n];
    for o in 0..c_out {
        let g = dy.channel(o);
        db[o] = db[o] + g.iter().copied().sum::<T>();
        for y in 0..h {
            let dst = o * n + y * wp;
            dext[dst..dst + w].copy_from_slice(&g[y * w..(y + 1) * w]);
        }
    }
    for tap in 0..9 {
        let (ky, kx) = (tap / 3, tap % 3);
        // dW[:, :, tap] += dY_ext · P_shifted^T
        T::gemm(
            Gemm {
                m: c_out,
                k: n,
                n: c_in,
                a: (0, n, 1),
                b: (ky * wp + kx, 1, s),
                c: (tap, c_in * 9, 9),
            },
            T::one(),
            &dext,
            &p,
            T::one(),
            dw,
        );
    }
    if !want_dx {
        return None;
    }
    let mut dp = vec![T::zero(); c_in * s];
    for tap in 0..9 {
        let (ky, kx) = (tap / 3, tap % 3);
        T::gemm(
            Gemm {
                m: c_in,
                k: c_out,
                n,
                a: (tap, 9, c_in * 9),
                b: (0, n, 1),
                c: (ky * wp + kx, s, 1),
            },
            T::one(),
            weights,
            &dext,
            T::one(),
            &mut dp,
        );
    }
    let mut dx = Tensor::zeros(c_in, h, w);
    for ch in 0..c_in {
        for y in 0..h {
            let src = ch * s + (y + 1) * wp + 1;
            let dst = (ch * h + y) * w;
            dx.data[dst..dst + w].copy_from_slice(&dp[src..src + w]);
        }
    }
    Some(dx)
}

/// Pointwise convolution; `weights` is `(c_out, c_in)`.
pub fn conv1x1<T: Real>(x: &Tensor<T>, weights: &[T], bias: &[T]) -> Result<Tensor<T>> {
    let (c_in, h, w) = x.shape();
    let c_out = bias.len();
    if weights.len() != c_out * c_in {
        return Err(shape_err(format!(
            "conv1x1: {} weights do not fit ({c_out}, {c_in})",
            weights.len()
        )));
    }
    let n = h * w;
    let mut out = Tensor::zeros(c_out, h, w);
    for (o, row) in out.data.chunks_mut(n).enumerate() {
        row.fill(bias[o]);
    }
    T::gemm(
        Gemm { m: c_out, k: c_in, n, a: (0, c_in, 1), b: (0, n, 1), c: (0, n, 1) },
        T::one(),
        weights,
        &x.data,
        T::one(),
        &mut out.data,
    );
    Ok(out)
}

pub fn conv1x1_backward<T: Real>(
    x: &Tensor<T>,
    weights: &[T],
    dy: &Tensor<T>,
    dw: &mut [T],
    db: &mut [T],
    want_dx: bool,
) -> Option<Tensor<T>> {
    let (c_in, h, w) = x.shape();
    let c_out = dy.c;
    let n = h * w;
    for o in 0..c_out {
        db[o] = db[o] + dy.channel(o).iter().copied().sum::<T>();
    }
    T::gemm(
        Gemm { m: c_out, k: n, n: c_in, a: (0, n, 1), b: (0, 1, n), c: (0, c_in, 1) },
        T::one(),
        &dy.data,
        &x.data,
        T::one(),
        dw,
    );
    if !want_dx {
        return None;
    }
    let mut dx = Tensor::zeros(c_in, h, w);
    T::gemm(
        Gemm { m: c_in, k: c_out, n, a: (0, 1, c_in), b: (0, n, 1), c: (0, n, 1) },
        T::one(),
        weights,
        &dy.data,
        T::zero(),
        &mut dx.data,
    );
    Some(dx)
}

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let mut y = x.clone();
    for v in &mut y.data {
        if !(*v > T::zero()) {
            *v = T::zero();
        }
    }
    y
}

/// Uses the forward output: the gradient passes where the output is positive.
pub fn relu_backward<T: Real>(y: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let mut dx = dy.clone();
    for (g, &v) in dx.data.iter_mut().zip(&y.data) {
        if !(v > T::zero()) {
            *g = T::zero();
        }
    }
    dx
}

pub fn sigmoid<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let mut y = x.clone();
    for v in &mut y.data {
        *v = T::one() / (T::one() + (-*v).exp());
    }
    y
}

pub fn sigmoid_backward<T: Real>(y: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let mut dx = dy.clone();
    for (g, &s) in dx.data.iter_mut().zip(&y.data) {
        *g = *g * s * (T::one() - s);
    }
    dx
}

/// 2×2 max pooling. Also returns, per output cell, the window position
/// (0..4, row-major) of the maximum; the first maximum wins ties.
pub fn maxpool2<T: Real>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<u8>)> {
    let (c, h, w) = x.shape();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(shape_err(format!("maxpool2 needs even dimensions, got {h}x{w}")));
    }
    let (ho, wo) = (h / 2, w / 2);
    let mut out = Tensor::zeros(c, ho, wo);
    let mut arg = vec![0u8; c * ho * wo];
    for ch in 0..c {
        let src = x.channel(ch);
        for y in 0..ho {
            for xo in 0..wo {
                let base = 2 * y * w + 2 * xo;
                let cand = [src[base], src[base + 1], src[base + w], src[base + w + 1]];
                let mut best = 0;
                for k in 1..4 {
                    if cand[k] > cand[best] {
                        best = k;
                    }
                }
                let i = (ch * ho + y) * wo + xo;
                out.data[i] = cand[best];
                arg[i] = best as u8;
            }
        }
    }
    Ok((out, arg))
}

pub fn maxpool2_backward<T: Real>(dy: &Tensor<T>, arg: &[u8]) -> Tensor<T> {
    let (c, ho, wo) = dy.shape();
    let w = 2 * wo;
    let mut dx = Tensor::zeros(c, 2 * ho, w);
    for ch in 0..c {
        for y in 0..ho {
            for xo in 0..wo {
                let i = (ch * ho + y) * wo + xo;
                let k = arg[i] as usize;
                let j = ch * 4 * ho * wo + (2 * y + k / 2) * w + 2 * xo + k % 2;
                dx.data[j] = dy.data[i];
            }
        }
    }
    dx
}

/// Nearest-neighbour ×2 upsampling.
pub fn upsample2<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let (c, h, w) = x.shape();
    let w2 = 2 * w;
    let mut out = Tensor::zeros(c, 2 * h, w2);
    for ch in 0..c {
        let src = x.channel(ch);
        for y in 0..2 * h {
            let row = &src[(y / 2) * w..(y / 2 + 1) * w];
            let dst = (ch * 2 * h + y) * w2;
            for (xi, &v) in row.iter().enumerate() {
                out.data[dst + 2 * xi] = v;
                out.data[dst + 2 * xi + 1] = v;
            }
        }
    }
    out
}

pub fn upsample2_backward<T: Real>(dy: &Tensor<T>) -> Tensor<T> {
    let (c, h2, w2) = dy.shape();
    let (h, w) = (h2 / 2, w2 / 2);
    let mut dx = Tensor::zeros(c, h, w);
    for ch in 0..c {
        let g = dy.channel(ch);
        for y in 0..h2 {
            for xx in 0..w2 {
                let i = (ch * h + y / 2) * w + xx / 2;
                dx.data[i] = dx.data[i] + g[y * w2 + xx];
            }
        }
    }
    dx
}

/// Stacks `a` then `b` along channels.
pub fn concat<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if (a.h, a.w) != (b.h, b.w) {
        return Err(shape_err(format!(
            "concat: spatial {}x{} vs {}x{}",
            a.h, a.w, b.h, b.w
        )));
    }
    let mut data = Vec::with_capacity(a.data.len() + b.data.len());
    data.extend_from_slice(&a.data);
    data.extend_from_slice(&b.data);
    Ok(Tensor::from_vec(a.c + b.c, a.h, a.w, data))
}

pub fn concat_backward<T: Real>(dy: &Tensor<T>, c_first: usize) -> (Tensor<T>, Tensor<T>) {
    let split = c_first * dy.plane_len();
    (
        Tensor::from_vec(c_first, dy.h, dy.w, dy.data[..split].to_vec()),
        Tensor::from_vec(dy.c - c_first, dy.h, dy.w, dy.data[split..].to_vec()),
    )
}

/// Inverted-dropout mask: each entry is 0 with probability `rate`, else
/// `1 / (1 - rate)`.
pub fn dropout_mask<T: Real, R: rand::Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Vec<T> {
    let keep = T::of(1.0 / (1.0 - rate));
    (0..len)
        .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
        .collect()
}

pub fn apply_mask<T: Real>(x: &Tensor<T>, mask: &[T]) -> Tensor<T> {
    let mut y = x.clone();
    for (v, &m) in y.data.iter_mut().zip(mask) {
        *v = *v * m;
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn random(c: usize, h: usize, w: usize, seed: u64) -> Tensor<f64> {
        let mut r = rng::seeded(seed);
        let data = (0..c * h * w).map(|_| StandardNormal.sample(&mut r)).collect();
        Tensor::from_vec(c, h, w, data)
    }

    /// Direct-loop cross-correlation.
    fn naive_conv(x: &Tensor<f64>, wt: &[f64], b: &[f64]) -> Tensor<f64> {
        let (c_in, h, w) = x.shape();
        let c_out = b.len();
        let mut y = Tensor::zeros(c_out, h, w);
        for o in 0..c_out {
            for yy in 0..h as isize {
                for xx in 0..w as isize {
                    let mut acc = b[o];
                    for c in 0..c_in {
                        for ky in 0..3isize {
                            for kx in 0..3isize {
                                let (sy, sx) = (yy + ky - 1, xx + kx - 1);
                                if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                    continue;
                                }
                                acc += wt[((o * c_in + c) * 3 + ky as usize) * 3 + kx as usize]
                                    * x.data[(c * h + sy as usize) * w + sx as usize];
                            }
                        }
                    }
                    y.data[(o * h + yy as usize) * w + xx as usize] = acc;
                }
            }
        }
        y
    }

    #[test]
    fn identity_kernel() {
        let x = random(1, 5, 7, 1);
        let mut k = vec![0.0; 9];
        k[4] = 1.0;
        assert_eq!(conv3x3(&x, &k, &[0.0]).unwrap(), x);
    }

    #[test]
    fn ones_kernel_on_constant() {
        let x = Tensor::from_vec(1, 6, 6, vec![2.5; 36]);
        let y = conv3x3(&x, &[1.0; 9], &[0.0]).unwrap();
        for yy in 1..5 {
            for xx in 1..5 {
                assert_eq!(y.data[yy * 6 + xx], 22.5);
            }
        }
        assert_eq!(y.data[0], 10.0);
    }

    #[test]
    fn conv_matches_naive_loops() {
        let x = random(3, 6, 5, 2);
        let wt = random(4, 3, 9, 3).data;
        let b = vec![0.1, -0.2, 0.3, 0.0];
        let got = conv3x3(&x, &wt, &b).unwrap();
        let want = naive_conv(&x, &wt, &b);
        for (a, e) in got.data.iter().zip(&want.data) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_rejects_bad_weights() {
        let x = random(2, 4, 4, 0);
        assert!(conv3x3(&x, &[0.0; 9], &[0.0]).is_err());
        assert!(conv1x1(&x, &[0.0; 3], &[0.0]).is_err());
    }

    /// Central differences of `sum(r * conv(x))` with respect to x, W and b.
    #[test]
    fn conv3x3_gradient_matches_finite_differences() {
        let h = 1e-3;
        let x = random(1, 8, 8, 10);
        let wt = random(2, 1, 9, 11).data;
        let b = vec![0.05, -0.1];
        let r = random(2, 8, 8, 12);
        let loss = |x: &Tensor<f64>, wt: &[f64], b: &[f64]| -> f64 {
            let y = conv3x3(x, wt, b).unwrap();
            y.data.iter().zip(&r.data).map(|(a, c)| a * c).sum()
        };
        let mut dw = vec![0.0; wt.len()];
        let mut db = vec![0.0; 2];
        let dx = conv3x3_backward(&x, &wt, &r, &mut dw, &mut db, true).unwrap();
        let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-12);
        let mut worst: f64 = 0.0;
        for i in 0..x.data.len() {
            let (mut p, mut m) = (x.clone(), x.clone());
            p.data[i] += h;
            m.data[i] -= h;
            let num = (loss(&p, &wt, &b) - loss(&m, &wt, &b)) / (2.0 * h);
            worst = worst.max(rel(dx.data[i], num));
        }
        for i in 0..wt.len() {
            let (mut p, mut m) = (wt.clone(), wt.clone());
            p[i] += h;
            m[i] -= h;
            let num = (loss(&x, &p, &b) - loss(&x, &m, &b)) / (2.0 * h);
            worst = worst.max(rel(dw[i], num));
        }
        for i in 0..2 {
            let (mut p, mut m) = (b.clone(), b.clone());
            p[i] += h;
            m[i] -= h;
            let num = (loss(&x, &wt, &p) - loss(&x, &wt, &m)) / (2.0 * h);
            worst = worst.max(rel(db[i], num));
        }
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn conv1x1_gradient_matches_finite_differences() {
        let h = 1e-3;
        let x = random(3, 4, 4, 20);
        let wt = random(2, 3, 1, 21).data;
        let b = vec![0.3, -0.3];
        let r = random(2, 4, 4, 22);
        let loss = |x: &Tensor<f64>, wt: &[f64]| -> f64 {
            let y = conv1x1(x, wt, &b).unwrap();
            y.data.iter().zip(&r.data).map(|(a, c)| a * c).sum()
        };
        let mut dw = vec![0.0; 6];
        let mut db = vec![0.0; 2];
        let dx = conv1x1_backward(&x, &wt, &r, &mut dw, &mut db, true).unwrap();
        for i in 0..x.data.len() {
            let (mut p, mut m) = (x.clone(), x.clone());
            p.data[i] += h;
            m.data[i] -= h;
            let num = (loss(&p, &wt) - loss(&m, &wt)) / (2.0 * h);
            assert!((dx.data[i] - num).abs() < 1e-8);
        }
        for i in 0..6 {
            let (mut p, mut m) = (wt.clone(), wt.clone());
            p[i] += h;
            m[i] -= h;
            let num = (loss(&x, &p) - loss(&x, &m)) / (2.0 * h);
            assert!((dw[i] - num).abs() < 1e-8);
        }
        let sums: Vec<f64> = (0..2).map(|o| r.channel(o).iter().sum()).collect();
        assert!((db[0] - sums[0]).abs() < 1e-12 && (db[1] - sums[1]).abs() < 1e-12);
    }

    #[test]
    fn maxpool_examples() {
        let x = Tensor::from_vec(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let (y, arg) = maxpool2(&x).unwrap();
        assert_eq!(y.data, vec![4.0]);
        let dx = maxpool2_backward(&Tensor::from_vec(1, 1, 1, vec![1.5]), &arg);
        assert_eq!(dx.data, vec![0.0, 0.0, 0.0, 1.5]);

        let c = Tensor::from_vec(2, 4, 4, vec![0.7; 32]);
        let (y, _) = maxpool2(&c).unwrap();
        assert_eq!(y.shape(), (2, 2, 2));
        assert!(y.data.iter().all(|&v| v == 0.7));

        assert!(maxpool2(&Tensor::<f64>::zeros(1, 3, 4)).is_err());
    }

    #[test]
    fn maxpool_ties_route_to_first() {
        let x = Tensor::from_vec(1, 2, 2, vec![5.0, 5.0, 5.0, 5.0]);
        let (_, arg) = maxpool2(&x).unwrap();
        assert_eq!(arg, vec![0]);
    }

    #[test]
    fn upsample_examples() {
        let x = Tensor::from_vec(1, 1, 1, vec![3.0]);
        assert_eq!(upsample2(&x).data, vec![3.0; 4]);
        let g = Tensor::from_vec(2, 4, 6, vec![0.25; 48]);
        let dx = upsample2_backward(&g);
        assert_eq!(dx.shape(), (2, 2, 3));
        assert!(dx.data.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn concat_round_trip() {
        let a = random(2, 3, 3, 5);
        let b = random(3, 3, 3, 6);
        let y = concat(&a, &b).unwrap();
        assert_eq!(y.shape(), (5, 3, 3));
        let (ga, gb) = concat_backward(&y, 2);
        assert_eq!((ga, gb), (a, b));
        assert!(concat(&random(1, 2, 2, 0), &random(1, 4, 4, 0)).is_err());
    }

    #[test]
    fn dropout_expectation_matches_eval_for_linear_probe() {
        let mut x = random(1, 8, 8, 30);
        let mut probe = random(1, 8, 8, 31);
        for v in x.data.iter_mut().chain(probe.data.iter_mut()) {
            *v = v.abs();
        }
        let eval: f64 = x.data.iter().zip(&probe.data).map(|(a, b)| a * b).sum();
        let mut r = rng::seeded(32);
        let samples = 10_000;
        let mut acc = 0.0;
        for _ in 0..samples {
            let mask = dropout_mask::<f64, _>(x.data.len(), 0.5, &mut r);
            let y = apply_mask(&x, &mask);
            acc += y.data.iter().zip(&probe.data).map(|(a, b)| a * b).sum::<f64>();
        }
        let mean = acc / samples as f64;
        assert!((mean - eval).abs() <= 0.02 * eval.abs(), "{mean} vs {eval}");
    }

    proptest! {
        #[test]
        fn maxpool_inverts_upsample(v in prop::collection::vec(-10.0f64..10.0, 2 * 3 * 5)) {
            let x = Tensor::from_vec(2, 3, 5, v);
            let (y, _) = maxpool2(&upsample2(&x)).unwrap();
            prop_assert_eq!(y, x);
        }

        #[test]
        fn relu_and_sigmoid_ranges(v in prop::collection::vec(-50.0f64..50.0, 16)) {
            let x = Tensor::from_vec(1, 4, 4, v);
            prop_assert!(relu(&x).data.iter().all(|&a| a >= 0.0));
            prop_assert!(sigmoid(&x).data.iter().all(|&a| (0.0..=1.0).contains(&a)));
        }
    }
}
