//! Analysis / synthesis transforms and the hyperprior pair, assembled from
//! a [`StagePlan`].

use crate::error::{ensure, Error, Result};
use crate::mgt::{mgt_stage, MgtConfig, MgtWeights};
use crate::params::{self, ParamSource};
use crate::pgconv::{BranchFlags, PgConv, PgConvWeights, PgMode};
use crate::scalar::Scalar;
use crate::tensor::{conv2d, mish, pixel_shuffle, ConvParams, ConvWeights, Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stage {
    /// 3×3 stride-2 convolution then PGConv, to `ch` channels.
    DrbDown(usize),
    /// 3×3 convolution to `4·ch`, pixel shuffle ×2, then PGConv.
    UrbUp(usize),
    /// Plain 3×3 stride-2 convolution to `ch` channels.
    ConvDown(usize),
    /// 3×3 convolution to `4·ch` then pixel shuffle ×2.
    SubpixelUp(usize),
    /// `k` transformer blocks at the current width, alternating shift.
    Mgt(usize),
    /// `k` residual blocks `x + pg(mish(pg(x)))` at the current width.
    ResPg(usize),
}

impl Stage {
    fn code(self) -> [f32; 2] {
        let (kind, arg) = match self {
            Stage::DrbDown(c) => (1, c),
            Stage::UrbUp(c) => (2, c),
            Stage::ConvDown(c) => (3, c),
            Stage::SubpixelUp(c) => (4, c),
            Stage::Mgt(k) => (5, k),
            Stage::ResPg(k) => (6, k),
        };
        [kind as f32, arg as f32]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct StagePlan {
    pub stages: Vec<Stage>,
}

impl StagePlan {
    /// `DRB↓2, DRB↓2, MGT×2, DRB↓2, MGT×2, Conv↓2(M)`; with `residual` the
    /// transformer stages become residual PGConv pairs.
    pub fn default_analysis(dim: usize, latent: usize, residual: bool) -> Self {
        let mid = |k| if residual { Stage::ResPg(k) } else { Stage::Mgt(k) };
        Self {
            stages: vec![
                Stage::DrbDown(dim),
                Stage::DrbDown(dim),
                mid(2),
                Stage::DrbDown(dim),
                mid(2),
                Stage::ConvDown(latent),
            ],
        }
    }

    /// Mirror of [`StagePlan::default_analysis`], ending in three channels.
    pub fn default_synthesis(dim: usize, residual: bool) -> Self {
        let mid = |k| if residual { Stage::ResPg(k) } else { Stage::Mgt(k) };
        Self {
            stages: vec![
                Stage::UrbUp(dim),
                mid(2),
                Stage::UrbUp(dim),
                mid(2),
                Stage::UrbUp(dim),
                Stage::SubpixelUp(3),
            ],
        }
    }

    /// Shape after every stage; fails where a stage cannot accept its input.
    pub fn output_shape(&self, input: Shape, mgt: &MgtConfig) -> Result<Shape> {
        let mut s = input;
        for stage in &self.stages {
            s = match *stage {
                Stage::DrbDown(c) | Stage::ConvDown(c) => {
                    ensure!(s[2] >= 1 && s[3] >= 1, "empty input to {:?}", stage);
                    [s[0], c, s[2].div_ceil(2), s[3].div_ceil(2)]
                }
                Stage::UrbUp(c) | Stage::SubpixelUp(c) => [s[0], c, s[2] * 2, s[3] * 2],
                Stage::Mgt(_) => {
                    ensure!(s[1] == mgt.dim, "transformer stage at width {} but embed dim is {}", s[1], mgt.dim);
                    let m = mgt.spatial_multiple();
                    ensure!(
                        s[2].is_multiple_of(m) && s[3].is_multiple_of(m),
                        "transformer stage input {}x{} not divisible by {}",
                        s[2],
                        s[3],
                        m
                    );
                    s
                }
                Stage::ResPg(_) => s,
            };
        }
        Ok(s)
    }

    /// Total resampling factor (down for analysis, up for synthesis).
    pub fn scale(&self) -> usize {
        self.stages
            .iter()
            .filter(|s| !matches!(s, Stage::Mgt(_) | Stage::ResPg(_)))
            .map(|_| 2)
            .product()
    }

    /// Smallest spatial multiple an analysis input needs so every stage
    /// divides evenly.
    pub fn input_multiple(&self, mgt: &MgtConfig) -> usize {
        let mut scale = 1;
        let mut need = 1;
        for stage in &self.stages {
            match stage {
                Stage::DrbDown(_) | Stage::ConvDown(_) => {
                    scale *= 2;
                    need = lcm(need, scale);
                }
                Stage::Mgt(_) => need = lcm(need, scale * mgt.spatial_multiple()),
                _ => {}
            }
        }
        need
    }

    pub(crate) fn codes(&self) -> Vec<f32> {
        self.stages.iter().flat_map(|s| s.code()).collect()
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub(crate) fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

fn conv3x3<W: Scalar>(src: &mut dyn ParamSource, prefix: &str, out: usize, inp: usize, stride: usize) -> Result<ConvWeights<W>> {
    params::conv(src, prefix, [out, inp, 3, 3], ConvParams::same(3, 3).stride(stride))
}

/// Stride-2 3×3 convolution followed by a PGConv.
pub fn drb_down<T: Scalar, W: Scalar>(input: &Tensor<T>, conv: &ConvWeights<W>, pg: &PgConv<W>, mode: PgMode) -> Result<Tensor<T>> {
    pg.forward_mode(&conv2d(input, conv)?, mode)
}

/// Sub-pixel ×2 upsampling (3×3 convolution + pixel shuffle) followed by a PGConv.
pub fn urb_up<T: Scalar, W: Scalar>(input: &Tensor<T>, conv: &ConvWeights<W>, pg: &PgConv<W>, mode: PgMode) -> Result<Tensor<T>> {
    pg.forward_mode(&pixel_shuffle(&conv2d(input, conv)?, 2)?, mode)
}

#[derive(Clone, Debug)]
pub enum StageLayer<W> {
    DrbDown { conv: ConvWeights<W>, pg: PgConv<W> },
    UrbUp { conv: ConvWeights<W>, pg: PgConv<W> },
    ConvDown(ConvWeights<W>),
    SubpixelUp(ConvWeights<W>),
    Mgt(Vec<MgtWeights<W>>),
    ResPg(Vec<[PgConv<W>; 2]>),
}

/// One of g_a / g_s: a built stage plan.
#[derive(Clone, Debug)]
pub struct Transform<W> {
    in_ch: usize,
    layers: Vec<StageLayer<W>>,
    mgt: MgtConfig,
}

impl<W: Scalar> Transform<W> {
    pub fn build(
        src: &mut dyn ParamSource,
        prefix: &str,
        plan: &StagePlan,
        in_ch: usize,
        mgt: &MgtConfig,
        flags: BranchFlags,
    ) -> Result<Self> {
        let mut ch = in_ch;
        let mut layers = Vec::with_capacity(plan.stages.len());
        for (i, stage) in plan.stages.iter().enumerate() {
            let p = format!("{prefix}.{i}");
            let layer = match *stage {
                Stage::DrbDown(c) => {
                    let conv = conv3x3(src, &format!("{p}.conv"), c, ch, 2)?;
                    let pg = PgConv::new(PgConvWeights::build(src, &format!("{p}.pg"), c, c, flags)?);
                    ch = c;
                    StageLayer::DrbDown { conv, pg }
                }
                Stage::UrbUp(c) => {
                    let conv = conv3x3(src, &format!("{p}.conv"), 4 * c, ch, 1)?;
                    let pg = PgConv::new(PgConvWeights::build(src, &format!("{p}.pg"), c, c, flags)?);
                    ch = c;
                    StageLayer::UrbUp { conv, pg }
                }
                Stage::ConvDown(c) => {
                    let conv = conv3x3(src, &format!("{p}.conv"), c, ch, 2)?;
                    ch = c;
                    StageLayer::ConvDown(conv)
                }
                Stage::SubpixelUp(c) => {
                    let conv = conv3x3(src, &format!("{p}.conv"), 4 * c, ch, 1)?;
                    ch = c;
                    StageLayer::SubpixelUp(conv)
                }
                Stage::Mgt(k) => {
                    ensure!(ch == mgt.dim, "transformer stage {} at width {} but embed dim is {}", i, ch, mgt.dim);
                    let blocks = (0..k)
                        .map(|b| MgtWeights::build(src, &format!("{p}.block{b}"), mgt))
                        .collect::<Result<Vec<_>>>()?;
                    StageLayer::Mgt(blocks)
                }
                Stage::ResPg(k) => {
                    let blocks = (0..k)
                        .map(|b| {
                            let a = PgConvWeights::build(src, &format!("{p}.block{b}.pg0"), ch, ch, flags)?;
                            let c = PgConvWeights::build(src, &format!("{p}.block{b}.pg1"), ch, ch, flags)?;
                            Ok([PgConv::new(a), PgConv::new(c)])
                        })
                        .collect::<Result<Vec<_>>>()?;
                    StageLayer::ResPg(blocks)
                }
            };
            layers.push(layer);
        }
        Ok(Self {
            in_ch,
            layers,
            mgt: *mgt,
        })
    }

    pub fn mgt_config(&self) -> &MgtConfig {
        &self.mgt
    }

    pub fn layers(&self) -> &[StageLayer<W>] {
        &self.layers
    }

    pub fn forward<T: Scalar>(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.forward_mode(input, PgMode::Merged)
    }

    pub fn forward_mode<T: Scalar>(&self, input: &Tensor<T>, mode: PgMode) -> Result<Tensor<T>> {
        ensure!(
            input.channels() == self.in_ch,
            "transform input channels: expected {}, got {}",
            self.in_ch,
            input.channels()
        );
        let mut x = input.clone();
        for layer in &self.layers {
            x = match layer {
                StageLayer::DrbDown { conv, pg } => drb_down(&x, conv, pg, mode)?,
                StageLayer::UrbUp { conv, pg } => urb_up(&x, conv, pg, mode)?,
                StageLayer::ConvDown(conv) => conv2d(&x, conv)?,
                StageLayer::SubpixelUp(conv) => pixel_shuffle(&conv2d(&x, conv)?, 2)?,
                StageLayer::Mgt(blocks) => mgt_stage(&x, blocks, &self.mgt)?,
                StageLayer::ResPg(blocks) => {
                    for [a, b] in blocks {
                        let inner = b.forward_mode(&mish(&a.forward_mode(&x, mode)?), mode)?;
                        x = x.add(&inner)?;
                    }
                    x
                }
            };
        }
        Ok(x)
    }
}

/// y → z: two stride-2 3×3 convolutions with a Mish in between.
#[derive(Clone, Debug)]
pub struct HyperAnalysis<W> {
    pub conv1: ConvWeights<W>,
    pub conv2: ConvWeights<W>,
}

impl<W: Scalar> HyperAnalysis<W> {
    pub fn build(src: &mut dyn ParamSource, prefix: &str, latent: usize, hyper: usize) -> Result<Self> {
        Ok(Self {
            conv1: conv3x3(src, &format!("{prefix}.0"), hyper, latent, 2)?,
            conv2: conv3x3(src, &format!("{prefix}.1"), hyper, hyper, 2)?,
        })
    }

    pub fn forward<T: Scalar>(&self, y: &Tensor<T>) -> Result<Tensor<T>> {
        conv2d(&mish(&conv2d(y, &self.conv1)?), &self.conv2)
    }
}

/// ẑ → (μ, σ_raw): two sub-pixel ×2 stages with a Mish in between, ending
/// at `2M` channels.
#[derive(Clone, Debug)]
pub struct HyperSynthesis<W> {
    pub conv1: ConvWeights<W>,
    pub conv2: ConvWeights<W>,
    latent: usize,
}

impl<W: Scalar> HyperSynthesis<W> {
    pub fn build(src: &mut dyn ParamSource, prefix: &str, hyper: usize, latent: usize) -> Result<Self> {
        Ok(Self {
            conv1: conv3x3(src, &format!("{prefix}.0"), 4 * hyper, hyper, 1)?,
            conv2: conv3x3(src, &format!("{prefix}.1"), 4 * 2 * latent, hyper, 1)?,
            latent,
        })
    }

    /// The raw `2M`-channel output.
    pub fn forward<T: Scalar>(&self, z_hat: &Tensor<T>) -> Result<Tensor<T>> {
        let h = mish(&pixel_shuffle(&conv2d(z_hat, &self.conv1)?, 2)?);
        pixel_shuffle(&conv2d(&h, &self.conv2)?, 2)
    }

    /// `(μ, σ_raw)`, each `M` channels.
    pub fn mean_scale<T: Scalar>(&self, z_hat: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let out = self.forward(z_hat)?;
        Ok((
            out.narrow_channels(0, self.latent)?,
            out.narrow_channels(self.latent, self.latent)?,
        ))
    }
}

/// `g_a`; the input must divide evenly through every stage of the plan.
pub fn analysis<T: Scalar, W: Scalar>(x: &Tensor<T>, g_a: &Transform<W>, plan: &StagePlan) -> Result<Tensor<T>> {
    check_divisible(x.shape(), plan.input_multiple(&g_a.mgt), "analysis input")?;
    g_a.forward(x)
}

pub fn synthesis<T: Scalar, W: Scalar>(y_hat: &Tensor<T>, g_s: &Transform<W>) -> Result<Tensor<T>> {
    g_s.forward(y_hat)
}

pub fn hyper_analysis<T: Scalar, W: Scalar>(y: &Tensor<T>, h_a: &HyperAnalysis<W>) -> Result<Tensor<T>> {
    h_a.forward(y)
}

pub fn hyper_synthesis<T: Scalar, W: Scalar>(z_hat: &Tensor<T>, h_s: &HyperSynthesis<W>) -> Result<(Tensor<T>, Tensor<T>)> {
    h_s.mean_scale(z_hat)
}

pub(crate) fn check_divisible(shape: Shape, multiple: usize, what: &str) -> Result<()> {
    if !shape[2].is_multiple_of(multiple) || !shape[3].is_multiple_of(multiple) {
        return Err(Error::contract(format!(
            "{what}: {}x{} not divisible by {}",
            shape[3], shape[2], multiple
        )));
    }
    Ok(())
}
