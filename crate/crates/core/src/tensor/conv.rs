use rayon::prelude::*;

use super::{Shape, Tensor};
use crate::error::{ensure, Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvParams {
    pub stride: usize,
    /// Zero padding as (rows, cols).
    pub padding: (usize, usize),
    pub dilation: usize,
    pub groups: usize,
}

impl Default for ConvParams {
    fn default() -> Self {
        Self {
            stride: 1,
            padding: (0, 0),
            dilation: 1,
            groups: 1,
        }
    }
}

impl ConvParams {
    /// Stride 1 with padding that preserves spatial size for odd `kh × kw`.
    pub fn same(kh: usize, kw: usize) -> Self {
        Self {
            padding: (kh / 2, kw / 2),
            ..Self::default()
        }
    }

    pub fn stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn dilation(mut self, dilation: usize) -> Self {
        self.dilation = dilation;
        self
    }
}

/// A convolution kernel of shape `(out_ch, in_ch / groups, kh, kw)` plus bias.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvWeights<W> {
    kernel: Vec<W>,
    kernel_shape: Shape,
    bias: Vec<W>,
    params: ConvParams,
}

impl<W: Scalar> ConvWeights<W> {
    pub fn new(kernel_shape: Shape, kernel: Vec<W>, bias: Vec<W>, params: ConvParams) -> Result<Self> {
        let [out_ch, in_per_group, kh, kw] = kernel_shape;
        ensure!(
            kernel.len() == kernel_shape.iter().product::<usize>(),
            "kernel length {} does not match kernel shape {:?}",
            kernel.len(),
            kernel_shape
        );
        ensure!(bias.len() == out_ch, "bias length {} != out_ch {}", bias.len(), out_ch);
        ensure!(kh >= 1 && kw >= 1, "kernel dims must be >= 1, got {}x{}", kh, kw);
        ensure!(params.stride >= 1, "stride must be >= 1");
        ensure!(params.dilation >= 1, "dilation must be >= 1");
        ensure!(params.groups >= 1, "groups must be >= 1");
        ensure!(
            out_ch % params.groups == 0,
            "out_ch {} not divisible by groups {}",
            out_ch,
            params.groups
        );
        ensure!(in_per_group >= 1 && out_ch >= 1, "empty kernel shape {:?}", kernel_shape);
        Ok(Self {
            kernel,
            kernel_shape,
            bias,
            params,
        })
    }

    pub fn kernel(&self) -> &[W] {
        &self.kernel
    }

    pub fn kernel_mut(&mut self) -> &mut [W] {
        &mut self.kernel
    }

    pub fn bias(&self) -> &[W] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [W] {
        &mut self.bias
    }

    pub fn kernel_shape(&self) -> Shape {
        self.kernel_shape
    }

    pub fn params(&self) -> ConvParams {
        self.params
    }

    pub fn out_channels(&self) -> usize {
        self.kernel_shape[0]
    }

    pub fn in_channels(&self) -> usize {
        self.kernel_shape[1] * self.params.groups
    }

    pub(crate) fn geom(&self) -> ConvGeom {
        ConvGeom {
            in_ch: self.in_channels(),
            out_ch: self.kernel_shape[0],
            kh: self.kernel_shape[2],
            kw: self.kernel_shape[3],
            params: self.params,
        }
    }

    pub fn cast<U: Scalar>(&self) -> ConvWeights<U> {
        let conv = |v: &[W]| v.iter().map(|x| U::from_f64_round(x.to_f64_exact())).collect();
        ConvWeights {
            kernel: conv(&self.kernel),
            kernel_shape: self.kernel_shape,
            bias: conv(&self.bias),
            params: self.params,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kh: usize,
    pub kw: usize,
    pub params: ConvParams,
}

impl ConvGeom {
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        let [n, c, h, w] = input;
        if c != self.in_ch {
            return Err(Error::contract(format!(
                "conv2d input channels: expected {}, got {}",
                self.in_ch, c
            )));
        }
        let p = self.params;
        let span_h = p.dilation * (self.kh - 1) + 1;
        let span_w = p.dilation * (self.kw - 1) + 1;
        ensure!(
            h + 2 * p.padding.0 >= span_h,
            "conv2d input height {} (padding {}) smaller than kernel span {}",
            h,
            p.padding.0,
            span_h
        );
        ensure!(
            w + 2 * p.padding.1 >= span_w,
            "conv2d input width {} (padding {}) smaller than kernel span {}",
            w,
            p.padding.1,
            span_w
        );
        let oh = (h + 2 * p.padding.0 - span_h) / p.stride + 1;
        let ow = (w + 2 * p.padding.1 - span_w) / p.stride + 1;
        Ok([n, self.out_ch, oh, ow])
    }
}

/// Cross-correlation (no kernel flip) with zero padding.
pub fn conv2d<T: Scalar, W: Scalar>(input: &Tensor<T>, weights: &ConvWeights<W>) -> Result<Tensor<T>> {
    let geom = weights.geom();
    let out_shape = geom.output_shape(input.shape())?;
    let kernel: Vec<f64> = weights.kernel.iter().map(|v| v.to_f64_exact()).collect();
    let mut acc = vec![0.0f64; out_shape.iter().product()];
    conv_accumulate(input, &kernel, &geom, &mut acc)?;
    let plane = out_shape[2] * out_shape[3];
    let out_ch = out_shape[1];
    for (i, chunk) in acc.chunks_mut(plane).enumerate() {
        let b = weights.bias[i % out_ch].to_f64_exact();
        chunk.iter_mut().for_each(|v| *v += b);
    }
    Ok(Tensor::from_f64(out_shape, &acc))
}

/// Adds the bias-free convolution of `input` with `kernel` into `acc`.
///
/// Each output element receives its terms in `(in_ch, ky, kx)` order, one
/// multiply and one add per term, independent of how the work is split.
pub(crate) fn conv_accumulate<T: Scalar>(
    input: &Tensor<T>,
    kernel: &[f64],
    geom: &ConvGeom,
    acc: &mut [f64],
) -> Result<()> {
    let out_shape = geom.output_shape(input.shape())?;
    ensure!(
        acc.len() == out_shape.iter().product::<usize>(),
        "accumulator length {} does not match output shape {:?}",
        acc.len(),
        out_shape
    );
    let [_, _, h, w] = input.shape();
    let [_, out_ch, oh, ow] = out_shape;
    let groups = geom.params.groups;
    let out_per_group = out_ch / groups;
    let block = [8, 4, 2, 1]
        .into_iter()
        .find(|b| out_per_group.is_multiple_of(*b))
        .unwrap_or(1);
    let plane = oh * ow;
    if plane == 0 {
        return Ok(());
    }
    let blocks_per_item = out_ch / block;
    let job = Job {
        data: input.data(),
        in_ch: geom.in_ch,
        in_per_group: geom.in_ch / groups,
        h,
        w,
        oh,
        ow,
        kh: geom.kh,
        kw: geom.kw,
        params: geom.params,
        out_per_group,
        kernel,
    };
    acc.par_chunks_mut(block * plane)
        .enumerate()
        .for_each(|(i, out)| {
            let n = i / blocks_per_item;
            let oc0 = (i % blocks_per_item) * block;
            job.run_block(n, oc0, block, out);
        });
    Ok(())
}

struct Job<'a, T> {
    data: &'a [T],
    in_ch: usize,
    in_per_group: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
    kh: usize,
    kw: usize,
    params: ConvParams,
    out_per_group: usize,
    kernel: &'a [f64],
}

impl<T: Scalar> Job<'_, T> {
    fn run_block(&self, n: usize, oc0: usize, block: usize, out: &mut [f64]) {
        let ConvParams {
            stride,
            padding: (pad_h, pad_w),
            dilation,
            ..
        } = self.params;
        let group = oc0 / self.out_per_group;
        let plane_in = self.h * self.w;
        let plane_out = self.oh * self.ow;
        let taps = self.kh * self.kw;
        for oy in 0..self.oh {
            for icl in 0..self.in_per_group {
                let ic = group * self.in_per_group + icl;
                let base = (n * self.in_ch + ic) * plane_in;
                let src_plane = &self.data[base..base + plane_in];
                for ky in 0..self.kh {
                    let iy = (oy * stride + ky * dilation) as isize - pad_h as isize;
                    if iy < 0 || iy >= self.h as isize {
                        continue;
                    }
                    let row = &src_plane[iy as usize * self.w..(iy as usize + 1) * self.w];
                    for kx in 0..self.kw {
                        let off = (kx * dilation) as isize - pad_w as isize;
                        let Some((lo, hi)) = valid_range(off, stride, self.w, self.ow) else {
                            continue;
                        };
                        for b in 0..block {
                            let wv = self.kernel[((oc0 + b) * self.in_per_group + icl) * taps + ky * self.kw + kx];
                            let dst = &mut out[b * plane_out + oy * self.ow..b * plane_out + (oy + 1) * self.ow];
                            if stride == 1 {
                                let start = (lo as isize + off) as usize;
                                let src = &row[start..start + (hi - lo)];
                                for (a, x) in dst[lo..hi].iter_mut().zip(src) {
                                    *a += wv * x.to_f64_exact();
                                }
                            } else {
                                for (ox, a) in dst.iter_mut().enumerate().take(hi).skip(lo) {
                                    let ix = (ox * stride) as isize + off;
                                    *a += wv * row[ix as usize].to_f64_exact();
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Output columns `lo..hi` whose input column `ox * stride + off` lies in `0..w`.
fn valid_range(off: isize, stride: usize, w: usize, ow: usize) -> Option<(usize, usize)> {
    let s = stride as isize;
    let lo = if off >= 0 { 0 } else { ((-off) + s - 1) / s };
    let last = w as isize - 1 - off;
    if last < 0 {
        return None;
    }
    let hi = (last / s + 1).min(ow as isize);
    (lo < hi).then_some((lo as usize, hi as usize))
}
