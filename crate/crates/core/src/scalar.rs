//! Scalar abstraction for the numeric core.
//!
//! Everything differentiable (tape, models, optimizers, statistics) is
//! generic over [`Scalar`] so the same code runs in `f32` or `f64`. The
//! crate-root aliases pin `f64` as the default precision.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssignOps};

/// Floating-point element type accepted by the numeric core.
pub trait Scalar:
    Float
    + NumAssignOps
    + FromPrimitive
    + Sum<Self>
    + LinalgScalar
    + ScalarOperand
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Conversion from `f64` for constants and configs.
    fn from_real(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("finite f64 constant")
    }

    /// Conversion from a usize count (batch sizes, node counts).
    fn from_count(v: usize) -> Self {
        <Self as FromPrimitive>::from_usize(v).expect("count fits in scalar")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
