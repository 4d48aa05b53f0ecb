//! Adaptive Simpson quadrature for smooth one-dimensional integrands.
//!
//! Used for envelope integrals (closed-form cross-checks and the analytic
//! single-pulse flux), independently of the ODE stepper.

use crate::scalar::Real;

/// Integrate `f` over `[a, b]` by adaptive Simpson with Richardson
/// extrapolation. `tol` is an absolute tolerance on the result;
/// `max_depth` bounds the bisection recursion.
pub fn adaptive_simpson<F: Real>(
    f: &dyn Fn(F) -> F,
    a: F,
    b: F,
    tol: F,
    max_depth: u32,
) -> F {
    if a == b {
        return F::zero();
    }
    let c = (a + b) * F::of(0.5);
    let fa = f(a);
    let fb = f(b);
    let fc = f(c);
    let whole = simpson(a, b, fa, fc, fb);
    recurse(f, a, b, fa, fc, fb, whole, tol, max_depth)
}

fn simpson<F: Real>(a: F, b: F, fa: F, fc: F, fb: F) -> F {
    (b - a) / F::of(6.0) * (fa + F::of(4.0) * fc + fb)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Real>(
    f: &dyn Fn(F) -> F,
    a: F,
    b: F,
    fa: F,
    fc: F,
    fb: F,
    whole: F,
    tol: F,
    depth: u32,
) -> F {
    let c = (a + b) * F::of(0.5);
    let lm = (a + c) * F::of(0.5);
    let rm = (c + b) * F::of(0.5);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, c, fa, flm, fc);
    let right = simpson(c, b, fc, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= F::of(15.0) * tol {
        // Richardson term cancels the leading error of the composite rule.
        return left + right + delta / F::of(15.0);
    }
    let half_tol = tol * F::of(0.5);
    recurse(f, a, c, fa, flm, fc, left, half_tol, depth - 1)
        + recurse(f, c, b, fc, frm, fb, right, half_tol, depth - 1)
}
