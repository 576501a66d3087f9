//! Learned image compression with prior-guided convolutions and multi-scale
//! gated window transformers.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the common choices.

pub mod codec;
pub mod config;
pub mod entropy;
pub mod error;
pub mod image;
pub mod metrics;
pub mod mgt;
pub mod model;
pub mod parallel;
pub mod params;
pub mod pgconv;
pub mod range_coder;
pub mod scalar;
pub mod tensor;
pub mod transforms;
pub mod weights_io;

pub use config::{CodecConfig, Preset, Variant};
pub use error::{Error, Result};
pub use image::Image;
pub use model::{init_weights, Model};
pub use scalar::Scalar;
pub use tensor::Tensor;
pub use weights_io::WeightFile;

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Model32 = Model<f32>;
pub type Model64 = Model<f64>;
