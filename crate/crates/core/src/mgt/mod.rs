//! Multi-scale gated transformer block.
//!
//! ```text
//! mid = x   + MGMSA(LN(x))
//! out = mid + MGFN(LN(mid))
//! ```
//!
//! MGMSA projects to queries (C/2), keys (C/2) and values (2C), splits each
//! in half along channels, runs windowed attention on two lattices with
//! different dilation rates, multiplies the two C-channel results and
//! projects back to C. MGFN expands to 2C on two paths with 3×3 and 5×5
//! depth-wise convolutions and cross-gates them through Mish.

mod attention;
mod window;

pub use attention::{attention_weights, dilated_window_attention, rel_index, window_attention, HeadParams};
pub use window::{dilated_window_gather, dilated_window_scatter, WindowBatch, WindowLayout};

use crate::error::{ensure, Result};
use crate::params::{self, Init, ParamSource};
use crate::scalar::Scalar;
use crate::tensor::{conv2d, layer_norm, mish_scalar, ConvParams, ConvWeights, Tensor, DEFAULT_LN_EPS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MgtConfig {
    /// Embedding width C.
    pub dim: usize,
    /// Window side P in lattice tokens.
    pub window: usize,
    pub dilations: [usize; 2],
    /// Heads per attention branch.
    pub heads: usize,
    /// Depth-wise kernel sizes of the two feed-forward paths.
    pub dw_kernels: [usize; 2],
    /// When false, the second attention branch and the second feed-forward
    /// path are dropped: the block degenerates to a plain (S)W-MSA block.
    pub gated: bool,
}

impl MgtConfig {
    /// Dilations (1, 2), depth-wise kernels 3×3 and 5×5, gating on.
    pub fn full(dim: usize, window: usize, heads: usize) -> Self {
        Self {
            dim,
            window,
            dilations: [1, 2],
            heads,
            dw_kernels: [3, 5],
            gated: true,
        }
    }

    /// Gated transformer without multi-scale extraction: both branches at
    /// dilation 1, both feed-forward paths 3×3.
    pub fn gated_single_scale(dim: usize, window: usize, heads: usize) -> Self {
        Self {
            dilations: [1, 1],
            dw_kernels: [3, 3],
            ..Self::full(dim, window, heads)
        }
    }

    /// Gating removed as well: a Swin-style block.
    pub fn swin(dim: usize, window: usize, heads: usize) -> Self {
        Self {
            gated: false,
            ..Self::gated_single_scale(dim, window, heads)
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.dim.is_multiple_of(4) && self.dim > 0, "embed dim {} must be a positive multiple of 4", self.dim);
        ensure!(self.window >= 1, "window must be >= 1");
        ensure!(self.heads >= 1, "heads must be >= 1");
        ensure!(
            (self.dim / 4).is_multiple_of(self.heads),
            "per-branch query width {} not divisible by {} heads",
            self.dim / 4,
            self.heads
        );
        ensure!(self.dilations.iter().all(|&d| d >= 1), "dilations must be >= 1");
        ensure!(
            self.dw_kernels.iter().all(|&k| k % 2 == 1),
            "depth-wise kernels must be odd, got {:?}",
            self.dw_kernels
        );
        Ok(())
    }

    pub fn branch_qk_dim(&self) -> usize {
        self.dim / 4
    }

    pub fn qk_head_dim(&self) -> usize {
        self.dim / 4 / self.heads
    }

    pub fn v_head_dim(&self) -> usize {
        self.dim / self.heads
    }

    fn branches(&self) -> usize {
        if self.gated {
            2
        } else {
            1
        }
    }

    /// Spatial multiple the input must satisfy.
    pub fn spatial_multiple(&self) -> usize {
        let d = if self.gated {
            self.dilations[0].max(self.dilations[1])
        } else {
            self.dilations[0]
        };
        self.window * d
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormParams<W> {
    pub gamma: Vec<W>,
    pub beta: Vec<W>,
}

impl<W: Scalar> NormParams<W> {
    fn build(src: &mut dyn ParamSource, prefix: &str, dim: usize) -> Result<Self> {
        Ok(Self {
            gamma: params::take(src, &format!("{prefix}.gamma"), &[dim], Init::Ones)?,
            beta: params::take(src, &format!("{prefix}.beta"), &[dim], Init::Zeros)?,
        })
    }

    fn apply<T: Scalar>(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        layer_norm(x, &self.gamma, &self.beta, DEFAULT_LN_EPS)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MgmsaWeights<W> {
    pub q: ConvWeights<W>,
    pub k: ConvWeights<W>,
    pub v: ConvWeights<W>,
    pub proj: ConvWeights<W>,
    /// Per branch, one temperature per head.
    pub tau: Vec<Vec<W>>,
    /// Per branch, `heads × (2P−1)²`.
    pub rel_bias: Vec<Vec<W>>,
}

impl<W: Scalar> MgmsaWeights<W> {
    pub fn build(src: &mut dyn ParamSource, prefix: &str, cfg: &MgtConfig) -> Result<Self> {
        let c = cfg.dim;
        let pw = ConvParams::default();
        let q = params::conv(src, &format!("{prefix}.q"), [c / 2, c, 1, 1], pw)?;
        let k = params::conv(src, &format!("{prefix}.k"), [c / 2, c, 1, 1], pw)?;
        let v = params::conv(src, &format!("{prefix}.v"), [2 * c, c, 1, 1], pw)?;
        let side = 2 * cfg.window - 1;
        let tau_init = Init::Const((cfg.qk_head_dim() as f32).sqrt());
        let mut tau = Vec::new();
        let mut rel_bias = Vec::new();
        for b in 0..cfg.branches() {
            tau.push(params::take(src, &format!("{prefix}.tau{b}"), &[cfg.heads], tau_init.clone())?);
            rel_bias.push(params::take(
                src,
                &format!("{prefix}.rel_bias{b}"),
                &[cfg.heads, side, side],
                Init::Zeros,
            )?);
        }
        let proj = params::conv(src, &format!("{prefix}.proj"), [c, c, 1, 1], pw)?;
        Ok(Self {
            q,
            k,
            v,
            proj,
            tau,
            rel_bias,
        })
    }

    pub fn head_params(&self, cfg: &MgtConfig, branch: usize) -> HeadParams<'_, W> {
        HeadParams {
            heads: cfg.heads,
            tau: &self.tau[branch],
            rel_bias: &self.rel_bias[branch],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MgfnWeights<W> {
    /// One 1×1 C→2C expansion per path.
    pub expand: Vec<ConvWeights<W>>,
    /// One depth-wise k×k convolution per path on 2C channels.
    pub dw: Vec<ConvWeights<W>>,
    pub contract: ConvWeights<W>,
}

impl<W: Scalar> MgfnWeights<W> {
    pub fn build(src: &mut dyn ParamSource, prefix: &str, cfg: &MgtConfig) -> Result<Self> {
        let c = cfg.dim;
        let mut expand = Vec::new();
        let mut dw = Vec::new();
        for p in 0..cfg.branches() {
            let ks = cfg.dw_kernels[p];
            expand.push(params::conv(src, &format!("{prefix}.expand{p}"), [2 * c, c, 1, 1], ConvParams::default())?);
            dw.push(params::conv(
                src,
                &format!("{prefix}.dw{p}"),
                [2 * c, 1, ks, ks],
                ConvParams::same(ks, ks).groups(2 * c),
            )?);
        }
        let contract = params::conv(src, &format!("{prefix}.contract"), [c, 2 * c, 1, 1], ConvParams::default())?;
        Ok(Self { expand, dw, contract })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MgtWeights<W> {
    pub norm1: NormParams<W>,
    pub attn: MgmsaWeights<W>,
    pub norm2: NormParams<W>,
    pub ffn: MgfnWeights<W>,
}

impl<W: Scalar> MgtWeights<W> {
    pub fn build(src: &mut dyn ParamSource, prefix: &str, cfg: &MgtConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            norm1: NormParams::build(src, &format!("{prefix}.norm1"), cfg.dim)?,
            attn: MgmsaWeights::build(src, &format!("{prefix}.attn"), cfg)?,
            norm2: NormParams::build(src, &format!("{prefix}.norm2"), cfg.dim)?,
            ffn: MgfnWeights::build(src, &format!("{prefix}.ffn"), cfg)?,
        })
    }
}

/// Per-branch attention outputs (each C channels) before gating.
pub fn mgmsa_branches<T: Scalar, W: Scalar>(
    input: &Tensor<T>,
    w: &MgmsaWeights<W>,
    cfg: &MgtConfig,
    shifted: bool,
) -> Result<Vec<Tensor<T>>> {
    cfg.validate()?;
    ensure!(
        input.channels() == cfg.dim,
        "MGMSA input channels: expected {}, got {}",
        cfg.dim,
        input.channels()
    );
    let c = cfg.dim;
    let q = conv2d(input, &w.q)?;
    let k = conv2d(input, &w.k)?;
    let v = conv2d(input, &w.v)?;
    let qk = cfg.branch_qk_dim();
    (0..cfg.branches())
        .map(|b| {
            let qb = q.narrow_channels(b * qk, qk)?;
            let kb = k.narrow_channels(b * qk, qk)?;
            let vb = v.narrow_channels(b * c, c)?;
            dilated_window_attention(&qb, &kb, &vb, &w.head_params(cfg, b), cfg.window, cfg.dilations[b], shifted)
        })
        .collect()
}

/// Gated multi-scale window attention: `proj(F¹ ⊙ F²)`, or `proj(F¹)` when
/// gating is disabled.
pub fn mgmsa_forward<T: Scalar, W: Scalar>(input: &Tensor<T>, w: &MgmsaWeights<W>, cfg: &MgtConfig, shifted: bool) -> Result<Tensor<T>> {
    let mut branches = mgmsa_branches(input, w, cfg, shifted)?.into_iter();
    let first = branches.next().expect("at least one branch");
    let gated = match branches.next() {
        Some(second) => first.mul(&second)?,
        None => first,
    };
    conv2d(&gated, &w.proj)
}

/// `σ(F¹)⊙F² + σ(F²)⊙F¹` with σ = Mish, evaluated in f64.
pub fn cross_gate<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    a.zip_map(b, |x, y| {
        let (x, y) = (x.to_f64_exact(), y.to_f64_exact());
        T::from_f64_round(mish_scalar(x) * y + mish_scalar(y) * x)
    })
}

pub fn mgfn_forward<T: Scalar, W: Scalar>(input: &Tensor<T>, w: &MgfnWeights<W>) -> Result<Tensor<T>> {
    let paths = w
        .expand
        .iter()
        .zip(&w.dw)
        .map(|(e, d)| conv2d(&conv2d(input, e)?, d))
        .collect::<Result<Vec<_>>>()?;
    let fused = match paths.as_slice() {
        [a, b] => cross_gate(a, b)?,
        [a] => a.map(|v| T::from_f64_round(mish_scalar(v.to_f64_exact()))),
        _ => unreachable!("one or two feed-forward paths"),
    };
    conv2d(&fused, &w.contract)
}

pub fn mgt_block<T: Scalar, W: Scalar>(input: &Tensor<T>, w: &MgtWeights<W>, cfg: &MgtConfig, shifted: bool) -> Result<Tensor<T>> {
    let attn = mgmsa_forward(&w.norm1.apply(input)?, &w.attn, cfg, shifted)?;
    let mid = input.add(&attn)?;
    let ffn = mgfn_forward(&w.norm2.apply(&mid)?, &w.ffn)?;
    mid.add(&ffn)
}

/// Consecutive blocks, alternating unshifted and shifted windows.
pub fn mgt_stage<T: Scalar, W: Scalar>(input: &Tensor<T>, blocks: &[MgtWeights<W>], cfg: &MgtConfig) -> Result<Tensor<T>> {
    let mut x = input.clone();
    for (i, b) in blocks.iter().enumerate() {
        x = mgt_block(&x, b, cfg, i % 2 == 1)?;
    }
    Ok(x)
}
