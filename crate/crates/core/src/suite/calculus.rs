//! ∫_{t0}^∞ t² exp(−d t^{2/d}/(2e)) dt against its closed-form majorant.

use std::f64::consts::E;

use crate::error::{Error, Result};

/// Absolute quadrature tolerance.
pub const QUAD_TOL: f64 = 1e-8;
/// The tail is dropped once the integrand falls below this fraction of f(t0).
pub const TRUNCATION: f64 = 1e-16;
const PIECES: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CalculusValues {
    pub integral: f64,
    pub error_estimate: f64,
    pub upper: f64,
    pub bound: f64,
}

pub fn integrand(d: usize, t: f64) -> f64 {
    let df = d as f64;
    t * t * (-df * t.powf(2.0 / df) / (2.0 * E)).exp()
}

pub fn majorant(d: usize, t0: f64) -> f64 {
    let df = d as f64;
    5.0 * E * t0.powf(3.0 - 2.0 / df) * (-df * t0.powf(2.0 / df) / (2.0 * E)).exp()
}

pub fn calculus_bound_values(d: usize, t0: f64) -> Result<CalculusValues> {
    if d == 0 || !(t0 > 0.0) || !t0.is_finite() {
        return Err(Error::InvalidParameter(format!("calculus_bound: d = {d}, t0 = {t0}")));
    }
    let f0 = integrand(d, t0);
    if !(f0 > 0.0) {
        return Err(Error::InvalidParameter(format!("calculus_bound: integrand underflows at t0 = {t0}")));
    }
    // the integrand decreases beyond (2e)^{d/2}, so a doubling search brackets the cut
    let mut upper = 2.0 * t0;
    while integrand(d, upper) >= TRUNCATION * f0 {
        upper *= 2.0;
    }
    let (mut lo, mut hi) = (upper / 2.0, upper);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if integrand(d, mid) >= TRUNCATION * f0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let upper = hi;
    let bound = majorant(d, t0);
    // tighter than absolute when the integral itself is far below 1
    let target = QUAD_TOL * bound.min(1.0) / PIECES as f64;
    let step = (upper - t0) / PIECES as f64;
    let mut integral = 0.0;
    let mut error_estimate = 0.0;
    for k in 0..PIECES {
        let a = t0 + k as f64 * step;
        let b = if k + 1 == PIECES { upper } else { a + step };
        let out = quadrature::integrate(|t| integrand(d, t), a, b, target);
        integral += out.integral;
        error_estimate += out.error_estimate;
    }
    Ok(CalculusValues {
        integral,
        error_estimate,
        upper,
        bound,
    })
}
