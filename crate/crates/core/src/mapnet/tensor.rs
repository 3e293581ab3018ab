use std::fmt::Debug;
use std::iter::Sum;

use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point element type of the network. Training runs in `f32`;
/// gradient checking runs the same code in `f64`.
pub trait Real:
    num_traits::Float + Default + Debug + Send + Sync + Sum + Serialize + DeserializeOwned + 'static
{
    fn of(v: f64) -> Self;
    fn as_f64(self) -> f64;

    /// `C = alpha A B + beta C` on strided views (see [`Gemm`]).
    fn gemm(g: Gemm, alpha: Self, a: &[Self], b: &[Self], beta: Self, c: &mut [Self]);
}

/// Shapes and strides of a general matrix product `C (m×n) = A (m×k) B (k×n)`.
/// Offsets address the first element of each operand in its slice.
#[derive(Clone, Copy, Debug)]
pub struct Gemm {
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub a: (usize, usize, usize),
    pub b: (usize, usize, usize),
    pub c: (usize, usize, usize),
}

impl Gemm {
    /// (offset, row stride, col stride) for each operand.
    fn check<T>(&self, a: &[T], b: &[T], c: &[T]) {
        let last = |(off, rs, cs): (usize, usize, usize), rows: usize, cols: usize| {
            if rows == 0 || cols == 0 {
                off
            } else {
                off + (rows - 1) * rs + (cols - 1) * cs
            }
        };
        assert!(last(self.a, self.m, self.k) < a.len().max(1), "gemm: A out of bounds");
        assert!(last(self.b, self.k, self.n) < b.len().max(1), "gemm: B out of bounds");
        assert!(last(self.c, self.m, self.n) < c.len().max(1), "gemm: C out of bounds");
    }
}

macro_rules! impl_real {
    ($t:ty, $f:path) => {
        impl Real for $t {
            #[inline]
            fn of(v: f64) -> Self {
                v as $t
            }

            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }

            fn gemm(g: Gemm, alpha: Self, a: &[Self], b: &[Self], beta: Self, c: &mut [Self]) {
                if g.m == 0 || g.n == 0 {
                    return;
                }
                g.check(a, b, c);
                // SAFETY: `check` verified every addressed element lies in
                // its slice, and `c` is uniquely borrowed.
                unsafe {
                    $f(
                        g.m,
                        g.k,
                        g.n,
                        alpha,
                        a.as_ptr().add(g.a.0),
                        g.a.1 as isize,
                        g.a.2 as isize,
                        b.as_ptr().add(g.b.0),
                        g.b.1 as isize,
                        g.b.2 as isize,
                        beta,
                        c.as_mut_ptr().add(g.c.0),
                        g.c.1 as isize,
                        g.c.2 as isize,
                    )
                }
            }
        }
    };
}

impl_real!(f32, matrixmultiply::sgemm);
impl_real!(f64, matrixmultiply::dgemm);

/// Dense channel-major tensor `(channels, height, width)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self {
            c,
            h,
            w,
            data: vec![T::zero(); c * h * w],
        }
    }

    pub fn from_vec(c: usize, h: usize, w: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), c * h * w, "tensor data does not match shape");
        Self { c, h, w, data }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.c, self.h, self.w)
    }

    pub fn plane_len(&self) -> usize {
        self.h * self.w
    }

    pub fn channel(&self, ch: usize) -> &[T] {
        let n = self.plane_len();
        &self.data[ch * n..(ch + 1) * n]
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            c: self.c,
            h: self.h,
            w: self.w,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }
}
