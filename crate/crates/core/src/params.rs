//! Named parameter plumbing shared by initialization and loading.
//!
//! Every layer pulls its tensors from a [`ParamSource`] by name, in a fixed
//! order. Initialization and loading are two sources over the same walk, so
//! the registry order is defined exactly once: by the layer constructors.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{ConvParams, ConvWeights};

#[derive(Clone, Debug, PartialEq)]
pub enum Init {
    /// `U(−b, b]` with `b = √(6 / fan_in)`.
    Uniform { fan_in: usize },
    Zeros,
    Ones,
    Const(f32),
    /// Fixed contents (configuration metadata stored alongside weights).
    Values(Vec<f32>),
}

pub trait ParamSource {
    fn param(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Vec<f32>>;
}

pub(crate) fn take<W: Scalar>(src: &mut dyn ParamSource, name: &str, shape: &[usize], init: Init) -> Result<Vec<W>> {
    let raw = src.param(name, shape, init)?;
    let expected: usize = shape.iter().product();
    if raw.len() != expected {
        return Err(Error::entry(name, format!("expected {} values, got {}", expected, raw.len())));
    }
    Ok(raw.into_iter().map(|v| W::from_f64_round(v as f64)).collect())
}

/// `{prefix}.weight` with shape `(out, in/groups, kh, kw)` and `{prefix}.bias`.
pub(crate) fn conv<W: Scalar>(
    src: &mut dyn ParamSource,
    prefix: &str,
    shape: [usize; 4],
    params: ConvParams,
) -> Result<ConvWeights<W>> {
    let fan_in = shape[1] * shape[2] * shape[3];
    let kernel = take(src, &format!("{prefix}.weight"), &shape, Init::Uniform { fan_in })?;
    let bias = take(src, &format!("{prefix}.bias"), &[shape[0]], Init::Zeros)?;
    ConvWeights::new(shape, kernel, bias, params)
}
