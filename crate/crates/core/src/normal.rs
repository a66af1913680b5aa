//! Standard normal density, distribution and quantile helpers.
//!
//! Thin wrappers around statrs' error-function implementations, plus the
//! probabilists' Hermite polynomials used throughout the Hermite-expansion
//! machinery.

use crate::scalar::Scalar;
use statrs::function::erf;

/// 1/sqrt(2*pi).
pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density phi(x).
#[inline]
pub fn phi(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal distribution function Phi(x).
#[inline]
pub fn cap_phi(x: f64) -> f64 {
    0.5 * erf::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Standard normal quantile Phi^{-1}(p) for p in (0, 1); returns -inf/+inf at
/// the endpoints.
///
/// statrs' erfc_inv is good to ~1e-12 here; one Newton step against
/// [`cap_phi`] pushes the roundtrip to full double precision.
#[inline]
pub fn inv_phi(p: f64) -> f64 {
    let x = -std::f64::consts::SQRT_2 * erf::erfc_inv(2.0 * p);
    if !x.is_finite() {
        return x;
    }
    let dens = phi(x);
    if dens > 0.0 {
        x - (cap_phi(x) - p) / dens
    } else {
        x
    }
}

/// Probabilists' Hermite polynomial H_q(x) via the three-term recurrence
/// H_0 = 1, H_1 = x, H_{q+1}(x) = x H_q(x) - q H_{q-1}(x).
///
/// These satisfy E[H_q(X) H_r(X)] = q! 1{q = r} for X standard normal.
pub fn hermite_poly<S: Scalar>(q: u32, x: S) -> S {
    match q {
        0 => S::one(),
        1 => x,
        _ => {
            let mut prev = S::one();
            let mut cur = x;
            for j in 1..q {
                let next = x * cur - S::from_count(j as usize) * prev;
                prev = cur;
                cur = next;
            }
            cur
        }
    }
}
