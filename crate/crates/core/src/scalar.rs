//! Scalar abstraction: all physics in this crate is generic over the
//! floating-point type through [`Real`].

use num_complex::Complex;
use num_traits as nt;

/// Floating-point scalar for rates, times and amplitudes: `f32` or `f64`.
///
/// Bundles the `num-traits` capabilities the numerics need plus a lossy
/// constructor for constants written as `f64` literals.
pub trait Real:
    nt::Float
    + nt::FloatConst
    + nt::FromPrimitive
    + nt::NumAssign
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + Send
    + Sync
    + 'static
{
    /// Convert an `f64` constant into this type.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 constant")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Element of an ODE state vector: the real scalar itself or a complex
/// number over it.
pub trait StateScalar<F: Real>:
    Copy
    + std::fmt::Debug
    + PartialEq
    + nt::Zero
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + Send
    + Sync
    + 'static
{
    /// Multiply by a real factor.
    fn scale(self, factor: F) -> Self;
    /// Absolute magnitude, used for error control.
    fn magnitude(self) -> F;
}

impl<F: Real> StateScalar<F> for F {
    fn scale(self, factor: F) -> Self {
        self * factor
    }
    fn magnitude(self) -> F {
        self.abs()
    }
}

impl<F: Real> StateScalar<F> for Complex<F> {
    fn scale(self, factor: F) -> Self {
        Complex::new(self.re * factor, self.im * factor)
    }
    fn magnitude(self) -> F {
        self.norm()
    }
}
