//! Floating-point abstraction shared by the numeric kernels.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssign, NumCast};

/// Real scalar usable by embeddings, rank statistics, and the GP surrogate.
pub trait Scalar:
    Float + FromPrimitive + NumCast + NumAssign + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossless-enough conversion from `f64` literals.
    fn lit(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("f64 literal representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
