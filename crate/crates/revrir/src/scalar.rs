//! Scalar abstraction for the numeric kernels.
//!
//! DSP, simulation and training code is generic over [`Scalar`] so the same
//! kernels run in `f32` or `f64`. The pipeline itself is pinned to the
//! crate-level [`crate::Real`] alias (`f64`): gradient checks and the DSP
//! oracles need double precision.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, NumAssignOps};

pub trait Scalar:
    Float + FloatConst + NumAssignOps + Sum + Debug + Display + Send + Sync + 'static
{
    fn from_f64(x: f64) -> Self;
    fn from_usize(x: usize) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn from_usize(x: usize) -> Self {
        x as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn from_usize(x: usize) -> Self {
        x as f64
    }
    fn to_f64(self) -> f64 {
        self
    }
}
