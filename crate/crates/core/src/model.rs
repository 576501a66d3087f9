//! The complete parameter set of one configuration.

use crate::config::CodecConfig;
use crate::error::{Error, Result};
use crate::params::{self, Init, ParamSource};
use crate::scalar::Scalar;
use crate::transforms::{HyperAnalysis, HyperSynthesis, Transform};
use crate::weights_io::{Initializer, Loader, WeightFile};

pub const META_ENTRY: &str = "meta.config";

#[derive(Clone, Debug)]
pub struct Model<W> {
    pub config: CodecConfig,
    pub g_a: Transform<W>,
    pub h_a: HyperAnalysis<W>,
    pub h_s: HyperSynthesis<W>,
    pub g_s: Transform<W>,
    /// Per-channel scale of the hyper-latent prior.
    pub z_sigma: Vec<W>,
}

impl<W: Scalar> Model<W> {
    /// Walks the parameter registry in its fixed order.
    pub fn build(src: &mut dyn ParamSource, config: &CodecConfig) -> Result<Self> {
        config.mgt.validate()?;
        config.flags.validate()?;
        let desc = config.descriptor();
        let stored = src.param(META_ENTRY, &[desc.len()], Init::Values(desc.clone()))?;
        if stored != desc {
            return Err(Error::ConfigMismatch(format!(
                "weights describe a different architecture than {}",
                config.name()
            )));
        }
        let g_a = Transform::build(src, "g_a", &config.analysis, 3, &config.mgt, config.flags)?;
        let h_a = HyperAnalysis::build(src, "h_a", config.latent, config.hyper)?;
        let h_s = HyperSynthesis::build(src, "h_s", config.hyper, config.latent)?;
        let g_s = Transform::build(src, "g_s", &config.synthesis, config.latent, &config.mgt, config.flags)?;
        let z_sigma = params::take(src, "entropy.z_sigma", &[config.hyper], Init::Ones)?;
        Ok(Self {
            config: config.clone(),
            g_a,
            h_a,
            h_s,
            g_s,
            z_sigma,
        })
    }

    /// Loads a weight file under the configuration it declares.
    pub fn from_weights(file: &WeightFile) -> Result<Self> {
        let config = CodecConfig::from_id(file.config_id)?;
        let mut loader = Loader::new(file);
        let model = Self::build(&mut loader, &config)?;
        loader.finish()?;
        Ok(model)
    }

    /// Like [`Model::from_weights`] but refuses a file made for another
    /// configuration.
    pub fn from_weights_for(file: &WeightFile, config: &CodecConfig) -> Result<Self> {
        if file.config_id != config.config_id() {
            return Err(Error::ConfigMismatch(format!(
                "weight file is for config id {} but {} (id {}) was requested",
                file.config_id,
                config.name(),
                config.config_id()
            )));
        }
        Self::from_weights(file)
    }

    pub fn init(config: &CodecConfig, seed: u64) -> Result<Self> {
        Self::from_weights(&init_weights(config, seed)?)
    }
}

/// Seeded parameters for `config`, in registry order.
pub fn init_weights(config: &CodecConfig, seed: u64) -> Result<WeightFile> {
    let mut init = Initializer::new(seed);
    Model::<f32>::build(&mut init, config)?;
    Ok(WeightFile {
        config_id: config.config_id(),
        seed,
        entries: init.into_entries(),
    })
}
