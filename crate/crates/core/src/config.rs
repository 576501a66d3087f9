//! Codec configurations: a width preset crossed with an ablation variant.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::mgt::MgtConfig;
use crate::pgconv::BranchFlags;
use crate::transforms::{lcm, StagePlan};

/// Ablation variants. `V1`–`V3` replace the transformer stages with residual
/// PGConv pairs and enable progressively more branches; `V4` is a Swin-style
/// block, `V5` a gated transformer without multi-scale dilation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Full,
    V1,
    V2,
    V3,
    V4,
    V5,
}

impl Variant {
    pub const ALL: [Variant; 6] = [Variant::Full, Variant::V1, Variant::V2, Variant::V3, Variant::V4, Variant::V5];

    fn code(self) -> u8 {
        match self {
            Variant::Full => 0,
            Variant::V1 => 1,
            Variant::V2 => 2,
            Variant::V3 => 3,
            Variant::V4 => 4,
            Variant::V5 => 5,
        }
    }

    pub fn branch_flags(self) -> BranchFlags {
        match self {
            Variant::V1 => BranchFlags::CONVS,
            Variant::V2 => BranchFlags::CONVS_DCONVS,
            _ => BranchFlags::ALL,
        }
    }

    /// True when the transformer stages are replaced by residual PGConv pairs.
    pub fn pgconv_only(self) -> bool {
        matches!(self, Variant::V1 | Variant::V2 | Variant::V3)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Full => f.write_str("full"),
            v => write!(f, "V{}", v.code()),
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(Variant::Full),
            "v1" => Ok(Variant::V1),
            "v2" => Ok(Variant::V2),
            "v3" => Ok(Variant::V3),
            "v4" => Ok(Variant::V4),
            "v5" => Ok(Variant::V5),
            _ => Err(Error::contract(format!("unknown variant `{s}` (expected full or V1..V5)"))),
        }
    }
}

/// Channel widths. `Paper` is the published size; the smaller presets keep
/// the same structure for fast runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Preset {
    Paper,
    Compact,
    Tiny,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Paper, Preset::Compact, Preset::Tiny];

    fn code(self) -> u8 {
        match self {
            Preset::Paper => 0,
            Preset::Compact => 1,
            Preset::Tiny => 2,
        }
    }

    /// (C, M, N_hyper, heads)
    fn widths(self) -> (usize, usize, usize, usize) {
        match self {
            Preset::Paper => (192, 192, 192, 8),
            Preset::Compact => (32, 32, 32, 4),
            Preset::Tiny => (8, 8, 8, 2),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Paper => "paper",
            Preset::Compact => "compact",
            Preset::Tiny => "tiny",
        })
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "paper" => Ok(Preset::Paper),
            "compact" => Ok(Preset::Compact),
            "tiny" => Ok(Preset::Tiny),
            _ => Err(Error::contract(format!("unknown preset `{s}` (expected paper, compact or tiny)"))),
        }
    }
}

pub const WINDOW: usize = 8;
/// Inputs are replicate-padded to a multiple of this before analysis.
pub const PAD_MULTIPLE: usize = 256;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CodecConfig {
    pub preset: Preset,
    pub variant: Variant,
    pub mgt: MgtConfig,
    pub flags: BranchFlags,
    pub latent: usize,
    pub hyper: usize,
    pub analysis: StagePlan,
    pub synthesis: StagePlan,
}

impl CodecConfig {
    pub fn new(preset: Preset, variant: Variant) -> Self {
        let (c, m, n, heads) = preset.widths();
        let mgt = match variant {
            Variant::V4 => MgtConfig::swin(c, WINDOW, heads),
            Variant::V5 => MgtConfig::gated_single_scale(c, WINDOW, heads),
            _ => MgtConfig::full(c, WINDOW, heads),
        };
        let residual = variant.pgconv_only();
        Self {
            preset,
            variant,
            mgt,
            flags: variant.branch_flags(),
            latent: m,
            hyper: n,
            analysis: StagePlan::default_analysis(c, m, residual),
            synthesis: StagePlan::default_synthesis(c, residual),
        }
    }

    pub fn config_id(&self) -> u8 {
        self.preset.code() * 8 + self.variant.code()
    }

    pub fn from_id(id: u8) -> Result<Self> {
        let preset = Preset::ALL
            .into_iter()
            .find(|p| p.code() == id / 8)
            .ok_or_else(|| Error::ConfigMismatch(format!("unknown config id {id}")))?;
        let variant = Variant::ALL
            .into_iter()
            .find(|v| v.code() == id % 8)
            .ok_or_else(|| Error::ConfigMismatch(format!("unknown config id {id}")))?;
        Ok(Self::new(preset, variant))
    }

    /// Spatial multiple the padded image must satisfy: the fixed 256 plus
    /// whatever the plan and hyperprior need.
    pub fn pad_multiple(&self) -> usize {
        let hyper = self.analysis.scale() * 4;
        lcm(lcm(PAD_MULTIPLE, self.analysis.input_multiple(&self.mgt)), hyper)
    }

    /// Fixed values describing the architecture, stored with the weights so
    /// a file cannot silently be loaded under a different plan.
    pub(crate) fn descriptor(&self) -> Vec<f32> {
        let mut v = vec![
            self.config_id() as f32,
            self.mgt.dim as f32,
            self.latent as f32,
            self.hyper as f32,
            self.mgt.window as f32,
            self.mgt.heads as f32,
            self.mgt.dilations[0] as f32,
            self.mgt.dilations[1] as f32,
            self.mgt.dw_kernels[0] as f32,
            self.mgt.dw_kernels[1] as f32,
            self.mgt.gated as u8 as f32,
        ];
        v.extend(self.flags.0.iter().map(|&b| b as u8 as f32));
        v.push(self.analysis.stages.len() as f32);
        v.extend(self.analysis.codes());
        v.push(self.synthesis.stages.len() as f32);
        v.extend(self.synthesis.codes());
        v
    }

    pub fn name(&self) -> String {
        format!("{}/{}", self.preset, self.variant)
    }
}
