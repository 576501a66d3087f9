//! Prior-guided convolution: eight parallel stride-1 branches that collapse
//! into a single 3×3 kernel.
//!
//! Branches, in their fixed summation order:
//!
//! | branch      | weights per (out, in) | receptive field |
//! |-------------|-----------------------|-----------------|
//! | `Vanilla`   | 3×3                   | full window     |
//! | `Pointwise` | 1×1                   | centre          |
//! | `AsymH`     | 1×3                   | centre row      |
//! | `AsymV`     | 3×1                   | centre column   |
//! | `Cdc`       | 3×3                   | `Σ w(p)·(x_p − x_c)` over p ≠ c |
//! | `Adc`       | 8 ring taps           | `Σ w_i·(x_{p_i} − x_{p_{i+1}})` around the ring |
//! | `Hdc`       | 3×2                   | `Σ w(p)·(x_p − x_{p+right})` |
//! | `Vdc`       | 2×3                   | `Σ w(p)·(x_p − x_{p+down})` |
//!
//! The four difference branches are high-pass: their 3×3 equivalents sum to
//! zero. Ring positions run clockwise from the top-left corner.

use rayon::prelude::*;

use crate::error::{ensure, Result};
use crate::params::{self, Init, ParamSource};
use crate::scalar::Scalar;
use crate::tensor::{conv2d, ConvParams, ConvWeights, Tensor};

pub const BRANCH_COUNT: usize = 8;

/// Clockwise 3×3 ring starting top-left, as (row, col).
pub const RING: [(usize, usize); 8] = [(0, 0), (0, 1), (0, 2), (1, 2), (2, 2), (2, 1), (2, 0), (1, 0)];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BranchKind {
    Vanilla,
    Pointwise,
    AsymH,
    AsymV,
    Cdc,
    Adc,
    Hdc,
    Vdc,
}

impl BranchKind {
    pub const ALL: [BranchKind; BRANCH_COUNT] = [
        BranchKind::Vanilla,
        BranchKind::Pointwise,
        BranchKind::AsymH,
        BranchKind::AsymV,
        BranchKind::Cdc,
        BranchKind::Adc,
        BranchKind::Hdc,
        BranchKind::Vdc,
    ];

    /// Stored weight layout per (out, in) pair, as (rows, cols).
    pub fn weight_dims(self) -> (usize, usize) {
        match self {
            BranchKind::Vanilla | BranchKind::Cdc => (3, 3),
            BranchKind::Pointwise => (1, 1),
            BranchKind::AsymH => (1, 3),
            BranchKind::AsymV => (3, 1),
            BranchKind::Adc => (1, 8),
            BranchKind::Hdc => (3, 2),
            BranchKind::Vdc => (2, 3),
        }
    }

    pub fn taps(self) -> usize {
        let (r, c) = self.weight_dims();
        r * c
    }

    pub fn is_difference(self) -> bool {
        matches!(self, BranchKind::Cdc | BranchKind::Adc | BranchKind::Hdc | BranchKind::Vdc)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            BranchKind::Vanilla => "vanilla",
            BranchKind::Pointwise => "pointwise",
            BranchKind::AsymH => "asym_h",
            BranchKind::AsymV => "asym_v",
            BranchKind::Cdc => "cdc",
            BranchKind::Adc => "adc",
            BranchKind::Hdc => "hdc",
            BranchKind::Vdc => "vdc",
        }
    }

    /// The branch as a list of `(weight slot, plus tap, minus tap)` terms on
    /// the 3×3 grid: output `+= w[slot] · (x[plus] − x[minus])`, or just
    /// `w[slot] · x[plus]` when `minus` is `None`.
    fn terms(self) -> Vec<(usize, (usize, usize), Option<(usize, usize)>)> {
        match self {
            BranchKind::Vanilla => (0..9).map(|i| (i, (i / 3, i % 3), None)).collect(),
            BranchKind::Pointwise => vec![(0, (1, 1), None)],
            BranchKind::AsymH => (0..3).map(|i| (i, (1, i), None)).collect(),
            BranchKind::AsymV => (0..3).map(|i| (i, (i, 1), None)).collect(),
            BranchKind::Cdc => (0..9)
                .filter(|&i| i != 4)
                .map(|i| (i, (i / 3, i % 3), Some((1, 1))))
                .collect(),
            BranchKind::Adc => (0..8).map(|i| (i, RING[i], Some(RING[(i + 1) % 8]))).collect(),
            BranchKind::Hdc => (0..6).map(|i| (i, (i / 2, i % 2), Some((i / 2, i % 2 + 1)))).collect(),
            BranchKind::Vdc => (0..6).map(|i| (i, (i / 3, i % 3), Some((i / 3 + 1, i % 3)))).collect(),
        }
    }
}

/// Which branches participate. The vanilla 3×3 and 1×1 pair is mandatory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BranchFlags(pub [bool; BRANCH_COUNT]);

impl BranchFlags {
    pub const ALL: BranchFlags = BranchFlags([true; BRANCH_COUNT]);
    /// Vanilla and pointwise only.
    pub const CONVS: BranchFlags = BranchFlags([true, true, false, false, false, false, false, false]);
    /// Vanilla, pointwise and the four difference branches.
    pub const CONVS_DCONVS: BranchFlags = BranchFlags([true, true, false, false, true, true, true, true]);

    pub fn is_enabled(&self, kind: BranchKind) -> bool {
        self.0[kind.index()]
    }

    pub fn set(&mut self, kind: BranchKind, on: bool) {
        self.0[kind.index()] = on;
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.is_enabled(BranchKind::Vanilla) && self.is_enabled(BranchKind::Pointwise),
            "the vanilla 3x3 and 1x1 branches must both be enabled"
        );
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Branch<W> {
    pub kind: BranchKind,
    /// `(out_ch, in_ch, rows, cols)` per [`BranchKind::weight_dims`].
    pub weight: Vec<W>,
    pub bias: Vec<W>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PgConvWeights<W> {
    out_ch: usize,
    in_ch: usize,
    branches: Vec<Branch<W>>,
    flags: BranchFlags,
}

impl<W: Scalar> PgConvWeights<W> {
    /// `branches` must hold one entry per kind, in [`BranchKind::ALL`] order.
    pub fn new(out_ch: usize, in_ch: usize, branches: Vec<Branch<W>>, flags: BranchFlags) -> Result<Self> {
        flags.validate()?;
        ensure!(
            branches.len() == BRANCH_COUNT,
            "expected {} branches, got {}",
            BRANCH_COUNT,
            branches.len()
        );
        for (b, kind) in branches.iter().zip(BranchKind::ALL) {
            ensure!(b.kind == kind, "branch {:?} out of order (expected {:?})", b.kind, kind);
            ensure!(
                b.weight.len() == out_ch * in_ch * kind.taps(),
                "branch {} weight length {} != {}",
                kind.name(),
                b.weight.len(),
                out_ch * in_ch * kind.taps()
            );
            ensure!(b.bias.len() == out_ch, "branch {} bias length {} != {}", kind.name(), b.bias.len(), out_ch);
        }
        Ok(Self {
            out_ch,
            in_ch,
            branches,
            flags,
        })
    }

    pub fn zeros(out_ch: usize, in_ch: usize, flags: BranchFlags) -> Result<Self> {
        let branches = BranchKind::ALL
            .iter()
            .map(|&kind| Branch {
                kind,
                weight: vec![W::zero(); out_ch * in_ch * kind.taps()],
                bias: vec![W::zero(); out_ch],
            })
            .collect();
        Self::new(out_ch, in_ch, branches, flags)
    }

    /// Registers `{prefix}.{branch}.weight|bias` for every enabled branch;
    /// disabled branches stay zero and are not stored.
    pub fn build(src: &mut dyn ParamSource, prefix: &str, out_ch: usize, in_ch: usize, flags: BranchFlags) -> Result<Self> {
        let mut w = Self::zeros(out_ch, in_ch, flags)?;
        for kind in BranchKind::ALL {
            if !flags.is_enabled(kind) {
                continue;
            }
            let (r, c) = kind.weight_dims();
            let fan_in = in_ch * kind.taps();
            let b = w.branch_mut(kind);
            b.weight = params::take(
                src,
                &format!("{prefix}.{}.weight", kind.name()),
                &[out_ch, in_ch, r, c],
                Init::Uniform { fan_in },
            )?;
            b.bias = params::take(src, &format!("{prefix}.{}.bias", kind.name()), &[out_ch], Init::Zeros)?;
        }
        Ok(w)
    }

    pub fn out_channels(&self) -> usize {
        self.out_ch
    }

    pub fn in_channels(&self) -> usize {
        self.in_ch
    }

    pub fn flags(&self) -> BranchFlags {
        self.flags
    }

    pub fn set_flags(&mut self, flags: BranchFlags) -> Result<()> {
        flags.validate()?;
        self.flags = flags;
        Ok(())
    }

    pub fn branch(&self, kind: BranchKind) -> &Branch<W> {
        &self.branches[kind.index()]
    }

    pub fn branch_mut(&mut self, kind: BranchKind) -> &mut Branch<W> {
        &mut self.branches[kind.index()]
    }

    fn enabled(&self) -> impl Iterator<Item = &Branch<W>> {
        self.branches.iter().filter(|b| self.flags.is_enabled(b.kind))
    }

    fn bias_sum(&self) -> Vec<f64> {
        let mut sum = vec![0.0f64; self.out_ch];
        for b in self.enabled() {
            for (s, v) in sum.iter_mut().zip(&b.bias) {
                *s += v.to_f64_exact();
            }
        }
        sum
    }
}

/// Central difference: `ŵ(p) = w(p)` off-centre, `ŵ(c) = w(c) − Σ w`,
/// evaluated as `−Σ_{p≠c} w(p)` so the kernel sums to zero exactly whenever
/// the off-centre sum is exact (always the case for f32-sourced weights of
/// similar magnitude).
pub fn equiv_kernel_cdc(w: &[f64; 9]) -> [f64; 9] {
    let off: f64 = w.iter().enumerate().filter(|&(i, _)| i != 4).map(|(_, v)| v).sum();
    let mut k = *w;
    k[4] = -off;
    k
}

/// Angular difference over the clockwise ring: `ŵ(p_i) = w_i − w_{i−1}`,
/// zero centre.
pub fn equiv_kernel_adc(ring: &[f64; 8]) -> [f64; 9] {
    let mut k = [0.0; 9];
    for i in 0..8 {
        let (r, c) = RING[i];
        k[r * 3 + c] = ring[i] - ring[(i + 7) % 8];
    }
    k
}

/// Horizontal difference; `w` is row-major over the 3×2 positions that have
/// a right neighbour.
pub fn equiv_kernel_hdc(w: &[f64; 6]) -> [f64; 9] {
    let mut k = [0.0; 9];
    for r in 0..3 {
        for c in 0..2 {
            let v = w[r * 2 + c];
            k[r * 3 + c] += v;
            k[r * 3 + c + 1] -= v;
        }
    }
    k
}

/// Vertical difference; `w` is row-major over the 2×3 positions that have a
/// neighbour below.
pub fn equiv_kernel_vdc(w: &[f64; 6]) -> [f64; 9] {
    let mut k = [0.0; 9];
    for r in 0..2 {
        for c in 0..3 {
            let v = w[r * 3 + c];
            k[r * 3 + c] += v;
            k[(r + 1) * 3 + c] -= v;
        }
    }
    k
}

/// One branch's per-(out, in) weights expressed as a 3×3 kernel.
pub fn equiv_kernel(kind: BranchKind, w: &[f64]) -> [f64; 9] {
    let mut k = [0.0; 9];
    match kind {
        BranchKind::Vanilla => k.copy_from_slice(w),
        BranchKind::Pointwise => k[4] = w[0],
        BranchKind::AsymH => k[3..6].copy_from_slice(w),
        BranchKind::AsymV => {
            for r in 0..3 {
                k[r * 3 + 1] = w[r];
            }
        }
        BranchKind::Cdc => k = equiv_kernel_cdc(w.try_into().expect("cdc takes 9 weights")),
        BranchKind::Adc => k = equiv_kernel_adc(w.try_into().expect("adc takes 8 ring weights")),
        BranchKind::Hdc => k = equiv_kernel_hdc(w.try_into().expect("hdc takes 6 weights")),
        BranchKind::Vdc => k = equiv_kernel_vdc(w.try_into().expect("vdc takes 6 weights")),
    }
    k
}

/// The single 3×3 kernel equivalent to all enabled branches.
#[derive(Clone, Debug, PartialEq)]
pub struct MergedKernel {
    pub out_ch: usize,
    pub in_ch: usize,
    /// `(out_ch, in_ch, 3, 3)`.
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
}

impl MergedKernel {
    pub fn to_conv(&self) -> ConvWeights<f64> {
        ConvWeights::new(
            [self.out_ch, self.in_ch, 3, 3],
            self.kernel.clone(),
            self.bias.clone(),
            ConvParams::same(3, 3),
        )
        .expect("merged kernel shape is consistent by construction")
    }
}

/// Positional sum of every enabled branch's 3×3 equivalent, in 64-bit.
pub fn merge<W: Scalar>(weights: &PgConvWeights<W>) -> MergedKernel {
    let (out_ch, in_ch) = (weights.out_ch, weights.in_ch);
    let mut kernel = vec![0.0f64; out_ch * in_ch * 9];
    let mut scratch = Vec::with_capacity(9);
    for b in weights.enabled() {
        let taps = b.kind.taps();
        for (pair, dst) in kernel.chunks_mut(9).enumerate() {
            scratch.clear();
            scratch.extend(b.weight[pair * taps..(pair + 1) * taps].iter().map(|v| v.to_f64_exact()));
            let k = equiv_kernel(b.kind, &scratch);
            for (d, v) in dst.iter_mut().zip(k) {
                *d += v;
            }
        }
    }
    MergedKernel {
        out_ch,
        in_ch,
        kernel,
        bias: weights.bias_sum(),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PgMode {
    /// Every branch evaluated separately in its native (pixel-difference)
    /// form and summed.
    Parallel,
    /// One convolution with the merged kernel.
    #[default]
    Merged,
}

pub fn pgconv_forward<T: Scalar, W: Scalar>(input: &Tensor<T>, weights: &PgConvWeights<W>, mode: PgMode) -> Result<Tensor<T>> {
    match mode {
        PgMode::Merged => conv2d(input, &merge(weights).to_conv()),
        PgMode::Parallel => parallel_forward(input, weights),
    }
}

fn parallel_forward<T: Scalar, W: Scalar>(input: &Tensor<T>, weights: &PgConvWeights<W>) -> Result<Tensor<T>> {
    let [n, c, h, w] = input.shape();
    ensure!(
        c == weights.in_ch,
        "pgconv input channels: expected {}, got {}",
        weights.in_ch,
        c
    );
    let out_ch = weights.out_ch;
    let plane = h * w;
    let branches: Vec<_> = weights
        .enabled()
        .map(|b| (b, b.kind.terms(), b.kind.taps()))
        .collect();
    let bias = weights.bias_sum();
    let src = input.data();
    let mut acc = vec![0.0f64; n * out_ch * plane];
    acc.par_chunks_mut(plane).enumerate().for_each(|(i, out)| {
        let (ni, oc) = (i / out_ch, i % out_ch);
        for (branch, terms, taps) in &branches {
            for ic in 0..c {
                let x = &src[(ni * c + ic) * plane..(ni * c + ic + 1) * plane];
                let wts = &branch.weight[(oc * c + ic) * taps..(oc * c + ic + 1) * taps];
                for &(slot, plus, minus) in terms {
                    let wv = wts[slot].to_f64_exact();
                    for y in 0..h {
                        for xx in 0..w {
                            let mut d = sample(x, h, w, y, xx, plus);
                            if let Some(m) = minus {
                                d -= sample(x, h, w, y, xx, m);
                            }
                            out[y * w + xx] += wv * d;
                        }
                    }
                }
            }
        }
        let b = bias[oc];
        out.iter_mut().for_each(|v| *v += b);
    });
    Ok(Tensor::from_f64([n, out_ch, h, w], &acc))
}

/// Zero-padded read of the 3×3 neighbourhood tap `(r, c)` around `(y, x)`.
#[inline]
fn sample<T: Scalar>(x: &[T], h: usize, w: usize, y: usize, xx: usize, (r, c): (usize, usize)) -> f64 {
    let iy = y as isize + r as isize - 1;
    let ix = xx as isize + c as isize - 1;
    if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
        0.0
    } else {
        x[iy as usize * w + ix as usize].to_f64_exact()
    }
}

/// A PGConv layer with its merged kernel precomputed for inference.
#[derive(Clone, Debug)]
pub struct PgConv<W> {
    weights: PgConvWeights<W>,
    merged: ConvWeights<f64>,
}

impl<W: Scalar> PgConv<W> {
    pub fn new(weights: PgConvWeights<W>) -> Self {
        let merged = merge(&weights).to_conv();
        Self { weights, merged }
    }

    pub fn weights(&self) -> &PgConvWeights<W> {
        &self.weights
    }

    pub fn merged(&self) -> &ConvWeights<f64> {
        &self.merged
    }

    pub fn forward<T: Scalar>(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        conv2d(input, &self.merged)
    }

    pub fn forward_mode<T: Scalar>(&self, input: &Tensor<T>, mode: PgMode) -> Result<Tensor<T>> {
        match mode {
            PgMode::Merged => self.forward(input),
            PgMode::Parallel => parallel_forward(input, &self.weights),
        }
    }
}
