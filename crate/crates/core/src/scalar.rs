use std::fmt::{Debug, Display};

use nalgebra::RealField;
use num_traits::ToPrimitive;

/// Floating-point element type accepted by every estimator in the crate.
pub trait Scalar: RealField + Copy + ToPrimitive + Debug + Display + Send + Sync + 'static {
    /// Relative step used by central finite differences.
    const FD_REL_STEP: f64;
    /// Relative tolerance for analytic vs finite-difference Jacobian agreement.
    const JACOBIAN_REL_TOL: f64;
    /// Machine epsilon as `f64`.
    const EPSILON: f64;

    fn of(x: f64) -> Self {
        nalgebra::convert(x)
    }

    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    const FD_REL_STEP: f64 = 1e-6;
    const JACOBIAN_REL_TOL: f64 = 1e-5;
    const EPSILON: f64 = f64::EPSILON;
}

impl Scalar for f32 {
    const FD_REL_STEP: f64 = 1e-3;
    const JACOBIAN_REL_TOL: f64 = 1e-2;
    const EPSILON: f64 = f32::EPSILON as f64;
}
