//! Scalar abstraction for the numeric kernels.
//!
//! Everything mathematical in this crate (path-loss conversions, window
//! statistics, cross-correlation, boosting, modularity) is written against
//! [`Real`] so it works identically for `f32` and `f64`. The pipeline
//! itself runs on [`crate::Scalar`] (`f64`).

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar: `f32` or `f64`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Shorthand for lossy conversion from `f64` constants.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts to any Real")
    }

    /// Lossy widening to `f64` for reporting.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }
}

impl<T> Real for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + NumAssign
        + Sum
        + Debug
        + Display
        + Default
        + Send
        + Sync
        + 'static
{
}

#[cfg(test)]
mod tests {
    use super::*;

    fn midpoint<R: Real>(a: R, b: R) -> R {
        (a + b) / R::of(2.0)
    }

    #[test]
    fn works_for_both_widths() {
        assert_eq!(midpoint(1.0f64, 2.0f64), 1.5);
        assert_eq!(midpoint(1.0f32, 2.0f32), 1.5);
    }
}
