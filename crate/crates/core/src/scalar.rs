//! Scalar abstractions.
//!
//! Learned parameters are generic over [`Real`] (`f32` or `f64`); the label
//! factorization only needs ring arithmetic and is generic over [`Exact`], so
//! it can also be instantiated with integers or rationals for exact checks.

use nalgebra as na;
use num_traits as nt;

/// Ring scalar for quantities that are built from label indicators.
pub trait Exact: nt::Num + PartialOrd + Copy + std::fmt::Debug + Send + Sync + 'static {}

impl<T> Exact for T where T: nt::Num + PartialOrd + Copy + std::fmt::Debug + Send + Sync + 'static {}

/// Floating point scalar used by the solvers: `f32` or `f64`.
pub trait Real: na::RealField + Copy + std::iter::Sum {
    /// Lossy conversion from `f64`.
    fn of(x: f64) -> Self {
        na::convert(x)
    }

    fn of_usize(x: usize) -> Self {
        na::convert(x as f64)
    }

    fn to_f64(self) -> f64 {
        // f32 and f64 are both subsets of f64.
        na::try_convert(self).unwrap_or(f64::NAN)
    }

    /// Absolute value without going through the `Signed`/`ComplexField` overlap.
    fn magnitude(self) -> Self {
        if self < Self::zero() {
            -self
        } else {
            self
        }
    }

    /// `+1` for non-negative values, `-1` otherwise (so `sgn(0) = +1`).
    fn sign_bit(self) -> i8 {
        if self >= Self::zero() {
            1
        } else {
            -1
        }
    }
}

impl Real for f32 {}
impl Real for f64 {}
