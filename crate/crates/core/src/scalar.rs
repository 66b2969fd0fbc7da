//! Element types accepted by the kernels.
//!
//! Every operator is generic over [`Scalar`]. Reductions are carried out in
//! `f64` regardless of the storage type and rounded once on write-back, so the
//! `f32` and `f64` instantiations share one reduction order.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// A storage element: `f32` (benchmark substrate) or `f64` (gradient-check substrate).
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Short name used in reports (`"f32"` / `"f64"`).
    const NAME: &'static str;

    fn to_acc(self) -> f64;

    fn from_acc(v: f64) -> Self;
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";

    #[inline(always)]
    fn to_acc(self) -> f64 {
        self as f64
    }

    #[inline(always)]
    fn from_acc(v: f64) -> Self {
        v as f32
    }
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";

    #[inline(always)]
    fn to_acc(self) -> f64 {
        self
    }

    #[inline(always)]
    fn from_acc(v: f64) -> Self {
        v
    }
}

/// Normwise relative difference `max|a - b| / max|b|`.
///
/// Returns the absolute difference when `b` is identically zero. Length
/// mismatches compare as infinitely far apart.
pub fn max_rel_diff<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut diff = 0.0f64;
    let mut scale = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x.to_acc(), y.to_acc());
        if x.is_nan() || y.is_nan() {
            return f64::INFINITY;
        }
        diff = diff.max((x - y).abs());
        scale = scale.max(y.abs());
    }
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}
