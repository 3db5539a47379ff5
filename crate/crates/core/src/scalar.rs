//! Scalar abstraction shared by the pose algebra and the controller laws.

use nalgebra::RealField;
use num_traits::ToPrimitive;

/// Floating point scalar usable by the geometry and control code: `f32` or `f64`.
pub trait Real: RealField + Copy + ToPrimitive {
    /// Converts an `f64` constant into this scalar.
    #[inline]
    fn lit(x: f64) -> Self {
        nalgebra::convert(x)
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}
