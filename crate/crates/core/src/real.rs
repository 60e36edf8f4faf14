//! Scalar abstraction and phase arithmetic helpers.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar for all core math.  Implemented by `f32` and `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + NumAssign + Debug + Display + Send + Sync + 'static
{
}

impl<T> Real for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + ToPrimitive
        + NumAssign
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}

/// Lift an `f64` literal into the working scalar type.
#[inline]
pub fn real<R: Real>(x: f64) -> R {
    R::from_f64(x).expect("f64 literal must be representable")
}

#[inline]
pub fn two_pi<R: Real>() -> R {
    R::PI() + R::PI()
}

/// Reduce a phase to the canonical range (-pi, pi].
pub fn wrap_phase<R: Real>(x: R) -> R {
    let tau = two_pi::<R>();
    let mut y = x - (x / tau).floor() * tau; // [0, 2pi)
    if y > R::PI() {
        y -= tau;
    }
    if y <= -R::PI() {
        // guards rounding at the boundary for large |x|
        y += tau;
    }
    y
}

/// Circular distance between two phases, in [0, pi].
pub fn phase_distance<R: Real>(a: R, b: R) -> R {
    wrap_phase(a - b).abs()
}

/// Representative of `x` (mod 2pi) nearest to `anchor` on the real line.
pub fn nearest_branch_2pi<R: Real>(x: R, anchor: R) -> R {
    anchor + wrap_phase(x - anchor)
}

/// Representative of `x` (mod pi) nearest to `anchor` on the real line.
///
/// Half-angle quantities (half-sums and half-differences of phases that are
/// each only known mod 2pi) are only defined mod pi; this picks the branch.
pub fn nearest_branch_pi<R: Real>(x: R, anchor: R) -> R {
    let k = ((anchor - x) / R::PI()).round();
    x + k * R::PI()
}

/// Deterministic total order for scalars (used for reproducible tie-breaks).
pub fn total_cmp<R: Real>(a: R, b: R) -> std::cmp::Ordering {
    let (a, b) = (a.to_f64().unwrap_or(f64::NAN), b.to_f64().unwrap_or(f64::NAN));
    a.total_cmp(&b)
}
