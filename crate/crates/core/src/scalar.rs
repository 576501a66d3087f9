//! Floating-point element types accepted by tensors and weights.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssignOps};

/// Element type of a [`Tensor`](crate::tensor::Tensor).
///
/// All reductions run in `f64` regardless of the element type, so the only
/// thing a scalar has to provide beyond `Float` is a cheap, infallible
/// round trip through `f64`.
pub trait Scalar:
    Float + FromPrimitive + NumAssignOps + Default + Debug + Display + Send + Sync + 'static
{
    fn to_f64_exact(self) -> f64;
    fn from_f64_round(v: f64) -> Self;
}

impl Scalar for f32 {
    #[inline(always)]
    fn to_f64_exact(self) -> f64 {
        self as f64
    }

    #[inline(always)]
    fn from_f64_round(v: f64) -> Self {
        v as f32
    }
}

impl Scalar for f64 {
    #[inline(always)]
    fn to_f64_exact(self) -> f64 {
        self
    }

    #[inline(always)]
    fn from_f64_round(v: f64) -> Self {
        v
    }
}
