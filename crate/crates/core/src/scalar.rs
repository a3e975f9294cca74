//! Scalar abstraction shared by every numerical routine in the crate.
//!
//! All estimators, solvers and samplers are written against [`Real`] so the
//! same code runs in `f32` or `f64`. Special functions (Beta, incomplete Beta,
//! chi-square quantiles) are evaluated in `f64` and converted back.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use rustfft::FftNum;
use serde::Serialize;

/// floating point: f32 or f64
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + FftNum
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + FromStr
    + Serialize
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal, rounding to the nearest representable value.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal is representable")
    }

    #[inline]
    fn idx(n: usize) -> Self {
        Self::from_usize(n).expect("index is representable")
    }

    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().expect("finite scalar converts to f64")
    }

    /// `max(x, c * eps)`; relative thresholds below machine precision are
    /// meaningless for the narrower types.
    #[inline]
    fn tol(x: f64) -> Self {
        let eps = Self::epsilon() * Self::lit(16.0);
        Self::lit(x).max(eps)
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub(crate) fn max_abs<T: Real>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}
