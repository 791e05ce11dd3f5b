//! Scalar abstraction for the numeric kernels.

use std::fmt::Debug;
use std::iter::Sum;

/// Floating-point scalar the numeric kernels are generic over: `f32` or `f64`.
pub trait Real:
    num_traits::Float + num_traits::FromPrimitive + num_traits::ToPrimitive + num_traits::NumAssign + Sum + Debug + Send + Sync + 'static
{
    /// Lossless conversion from a literal, for kernel coefficients.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in every Real")
    }

    /// Conversion from a count.
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in every Real")
    }
}

impl Real for f32 {}
impl Real for f64 {}
