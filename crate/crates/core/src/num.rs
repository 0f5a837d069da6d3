//! Scalar abstraction shared by every numeric module.

use std::cmp::Ordering;
use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point scalar the renderer is generic over: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` literal. Every `f64` is representable (with rounding) in
    /// both supported types, so this never fails.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("finite float converts to f64")
    }

    #[inline]
    fn two() -> Self {
        Self::one() + Self::one()
    }

    #[inline]
    fn half() -> Self {
        Self::lit(0.5)
    }

    /// Width below which a split quadrature bin is discarded.
    #[inline]
    fn sliver() -> Self {
        Self::lit(1e-12)
    }

    /// IEEE 754 total order, used wherever floats are sorted.
    fn total_cmp(&self, other: &Self) -> Ordering;
}

impl Real for f32 {
    fn total_cmp(&self, other: &Self) -> Ordering {
        f32::total_cmp(self, other)
    }
}

impl Real for f64 {
    fn total_cmp(&self, other: &Self) -> Ordering {
        f64::total_cmp(self, other)
    }
}

/// `|a - b| / max(|a|, |b|)`, zero when both are zero.
pub fn rel_diff<S: Real>(a: S, b: S) -> S {
    let scale = a.abs().max(b.abs());
    if scale == S::zero() {
        S::zero()
    } else {
        (a - b).abs() / scale
    }
}

/// `|a - b| <= tol * (1 + |b|)`.
pub fn close_mixed<S: Real>(a: S, b: S, tol: S) -> bool {
    (a - b).abs() <= tol * (S::one() + b.abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rel_diff_handles_zero() {
        assert_eq!(rel_diff(0.0_f64, 0.0), 0.0);
        assert_eq!(rel_diff(1.0_f64, 0.0), 1.0);
        assert!((rel_diff(2.0_f32, 1.0) - 0.5).abs() < 1e-7);
    }

    #[test]
    fn mixed_tolerance() {
        assert!(close_mixed(1.0 + 1e-11, 1.0_f64, 1e-10));
        assert!(!close_mixed(1.0 + 1e-9, 1.0_f64, 1e-10));
    }
}
