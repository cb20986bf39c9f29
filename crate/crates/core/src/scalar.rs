//! Scalar abstraction for the numeric pipeline.
//!
//! All numeric code in this crate is written against [`Real`] rather than a
//! concrete float type, so the whole pipeline can run in `f64` (the default
//! used by the CLI) or `f32`. The trait is a bundle of `num-traits` bounds
//! plus the thread-safety and formatting bounds the pipeline needs; it has a
//! blanket implementation, so `f32` and `f64` implement it automatically.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps};

/// Floating-point scalar usable throughout the pipeline.
pub trait Real:
    Float + FromPrimitive + NumAssignOps + Sum<Self> + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` constant into this scalar type.
    ///
    /// Panics if the value is not representable, which cannot happen for the
    /// finite literals this crate feeds it (out-of-range magnitudes would
    /// already be a bug).
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("constant not representable in scalar type")
    }

    /// Converts this scalar to `f64`, e.g. for serialization or display.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar not representable as f64")
    }
}

impl<T> Real for T where
    T: Float + FromPrimitive + NumAssignOps + Sum<T> + Debug + Display + Send + Sync + 'static
{
}
