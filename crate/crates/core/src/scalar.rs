//! Floating point scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar the tensor tape is generic over: `f32` or `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` literal, saturating to infinity if it does not fit.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).unwrap_or_else(|| if x > 0.0 { Self::infinity() } else { Self::neg_infinity() })
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_round_trip() {
        assert_eq!(<f64 as Real>::lit(0.25), 0.25);
        assert_eq!(<f32 as Real>::lit(0.25), 0.25f32);
        assert_eq!(<f32 as Real>::lit(1e300), f32::INFINITY);
        assert_eq!(1.5f32.as_f64(), 1.5);
    }
}
