use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point type usable by the numeric kernels.
pub trait Scalar: Float + FromPrimitive + ToPrimitive + Debug + Default + Send + Sync + 'static {
    /// Converts an `f64` constant, panicking only for values the type cannot represent at all.
    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("constant representable in scalar type")
    }

    fn from_count(count: usize) -> Self {
        Self::from_usize(count).expect("count representable in scalar type")
    }

    /// Lossless widening used for serialization; exact for `f32` and `f64`.
    fn widen(self) -> f64 {
        self.to_f64().expect("scalar widens to f64")
    }
}

impl<T> Scalar for T where T: Float + FromPrimitive + ToPrimitive + Debug + Default + Send + Sync + 'static {}

/// Clamps `value` into `[lo, hi]`.
pub fn clamp<T: Scalar>(value: T, lo: T, hi: T) -> T {
    value.max(lo).min(hi)
}
