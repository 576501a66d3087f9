//! Dense NCHW tensors and the handful of kernels the network needs.
//!
//! Every reduction (convolution dot products, normalization statistics,
//! softmax sums) is carried out in `f64` with a fixed left-to-right order per
//! output element, so results do not depend on how work is split across
//! threads.

mod conv;
mod ops;

pub use conv::{conv2d, ConvParams, ConvWeights};
pub use ops::{layer_norm, mish, mish_scalar, pixel_shuffle, softmax_rows, softplus, DEFAULT_LN_EPS};
pub(crate) use ops::softmax_in_place;

use crate::error::{ensure, Result};
use crate::scalar::Scalar;

/// Batch, channel, height, width.
pub type Shape = [usize; 4];

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Shape, data: Vec<T>) -> Result<Self> {
        ensure!(
            data.len() == shape.iter().product::<usize>(),
            "tensor data length {} does not match shape {:?}",
            data.len(),
            shape
        );
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: Shape, value: T) -> Self {
        Self {
            shape,
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize, usize) -> T) -> Self {
        let [n, c, h, w] = shape;
        let mut data = Vec::with_capacity(n * c * h * w);
        for ni in 0..n {
            for ci in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        data.push(f(ni, ci, y, x));
                    }
                }
            }
        }
        Self { shape, data }
    }

    pub(crate) fn from_f64(shape: Shape, acc: &[f64]) -> Self {
        debug_assert_eq!(acc.len(), shape.iter().product::<usize>());
        // `+ 0.0` folds a negative zero into positive zero.
        let data = acc.iter().map(|&v| T::from_f64_round(v + 0.0)).collect();
        Self { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn height(&self) -> usize {
        self.shape[2]
    }

    pub fn width(&self) -> usize {
        self.shape[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn offset(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.shape[1] + c) * self.shape[2] + y) * self.shape[3] + x
    }

    #[inline]
    pub fn get(&self, n: usize, c: usize, y: usize, x: usize) -> T {
        self.data[self.offset(n, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, v: T) {
        let i = self.offset(n, c, y, x);
        self.data[i] = v;
    }

    /// The `h × w` plane of channel `c` in batch item `n`.
    pub fn plane(&self, n: usize, c: usize) -> &[T] {
        let hw = self.shape[2] * self.shape[3];
        let start = (n * self.shape[1] + c) * hw;
        &self.data[start..start + hw]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        ensure!(
            self.shape == other.shape,
            "elementwise shape mismatch: {:?} vs {:?}",
            self.shape,
            other.shape
        );
        Ok(Self {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a * b)
    }

    /// Channels `start..start + len` of every batch item.
    pub fn narrow_channels(&self, start: usize, len: usize) -> Result<Self> {
        let [n, c, h, w] = self.shape;
        ensure!(
            start + len <= c,
            "channel range {}..{} out of bounds for {} channels",
            start,
            start + len,
            c
        );
        let hw = h * w;
        let mut data = Vec::with_capacity(n * len * hw);
        for ni in 0..n {
            let base = (ni * c + start) * hw;
            data.extend_from_slice(&self.data[base..base + len * hw]);
        }
        Ok(Self {
            shape: [n, len, h, w],
            data,
        })
    }

    pub fn concat_channels(parts: &[&Self]) -> Result<Self> {
        ensure!(!parts.is_empty(), "concat of zero tensors");
        let [n, _, h, w] = parts[0].shape;
        for p in parts {
            ensure!(
                p.shape[0] == n && p.shape[2] == h && p.shape[3] == w,
                "channel concat shape mismatch: {:?} vs {:?}",
                parts[0].shape,
                p.shape
            );
        }
        let c: usize = parts.iter().map(|p| p.shape[1]).sum();
        let hw = h * w;
        let mut data = Vec::with_capacity(n * c * hw);
        for ni in 0..n {
            for p in parts {
                let pc = p.shape[1];
                data.extend_from_slice(&p.data[ni * pc * hw..(ni + 1) * pc * hw]);
            }
        }
        Ok(Self {
            shape: [n, c, h, w],
            data,
        })
    }

    pub fn concat_batch(parts: &[&Self]) -> Result<Self> {
        ensure!(!parts.is_empty(), "concat of zero tensors");
        let [_, c, h, w] = parts[0].shape;
        let mut n = 0;
        let mut data = Vec::new();
        for p in parts {
            ensure!(
                p.shape[1..] == [c, h, w],
                "batch concat shape mismatch: {:?} vs {:?}",
                parts[0].shape,
                p.shape
            );
            n += p.shape[0];
            data.extend_from_slice(&p.data);
        }
        Ok(Self {
            shape: [n, c, h, w],
            data,
        })
    }

    pub fn batch_item(&self, i: usize) -> Result<Self> {
        let [n, c, h, w] = self.shape;
        ensure!(i < n, "batch index {} out of range for batch {}", i, n);
        let len = c * h * w;
        Ok(Self {
            shape: [1, c, h, w],
            data: self.data[i * len..(i + 1) * len].to_vec(),
        })
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .map(|v| U::from_f64_round(v.to_f64_exact()))
                .collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Same shape and identical bit patterns.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_f64_exact().to_bits() == b.to_f64_exact().to_bits())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.to_f64_exact() - b.to_f64_exact()).abs())
            .fold(0.0, f64::max)
    }
}
