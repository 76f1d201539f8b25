//! Floating-point abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar usable for features, weights and scores: `f32` or `f64`.
pub trait Scalar:
    Float
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
    /// Converts an `f64` literal. Values outside the target range saturate to infinity.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).unwrap_or_else(|| if x < 0.0 { Self::neg_infinity() } else { Self::infinity() })
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Relative tolerance appropriate for the precision of the type.
    fn default_tol() -> Self;
}

impl Scalar for f32 {
    fn default_tol() -> Self {
        1e-4
    }
}

impl Scalar for f64 {
    fn default_tol() -> Self {
        1e-9
    }
}

pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub(crate) fn norm<T: Scalar>(a: &[T]) -> T {
    // scaled accumulation keeps f32 norms of large vectors from overflowing
    let scale = a.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
    if scale == T::zero() || !scale.is_finite() {
        return scale;
    }
    let ss: T = a.iter().map(|&x| (x / scale) * (x / scale)).sum();
    scale * ss.sqrt()
}
