//! Scalar abstraction shared by the numeric kernels.

use num_traits::{Float, FloatConst, FromPrimitive};

/// Floating point scalar usable by the integrator, root finder and special functions.
pub trait Scalar: Float + FloatConst + FromPrimitive + std::fmt::Debug + Send + Sync + 'static {
    /// Converts an `f64` literal, panicking only for values the type cannot represent at all.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
