//! Scalar abstraction for the core math.
//!
//! The small linear algebra, kernel, and constitutive routines are generic
//! over [`Real`] so they can run in `f32` or `f64`. The solver itself is
//! pinned to `f64` (see the crate root aliases).

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive};

/// Floating-point scalar usable by the core math.
pub trait Real:
    Float + FloatConst + FromPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from `f64`, for literals inside generic code.
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal conversion")
    }

    /// Lossy conversion to `f64`, for diagnostics.
    fn to_f64_lossy(self) -> f64;
}

impl Real for f32 {
    fn to_f64_lossy(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn to_f64_lossy(self) -> f64 {
        self
    }
}
