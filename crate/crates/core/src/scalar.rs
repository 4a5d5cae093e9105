//! Scalar abstraction shared by the numeric parts of the pipeline.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, NumCast, ToPrimitive};

/// Real scalar used for activation norms, thresholds and derived metrics.
///
/// Implemented for `f32` (the on-disk precision) and `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumCast
    + FromStr
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Widen to `f64` without loss.
    fn to_f64_lossless(self) -> f64 {
        self.to_f64().expect("float scalars always widen to f64")
    }

    /// Round an `f64` to this scalar type (nearest).
    fn from_f64_rounded(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("finite f64 fits every float scalar")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
