//! Standard-normal primitives: density, distribution function, its inverse,
//! and the second derivative of the distribution function.
//!
//! The unchecked [`pdf`] and [`cdf`] are the hot-path forms used throughout the
//! crate; the `std_normal_*` functions add argument validation.

use crate::error::{Error, Result};

/// 1/√(2π)
pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// |Φ''| is maximised at z = ±1 with this value, e^{-1/2}/√(2π).
pub const MAX_ABS_PHI_SECOND: f64 = 0.241_970_724_519_143_37;

/// Beyond this magnitude the CDF is clamped to exactly 0 or 1.
pub const CDF_CLAMP: f64 = 40.0;

const INV_CDF_MAX_ITER: usize = 200;

/// Density, distribution function and curvature at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalEval {
    pub z: f64,
    pub pdf: f64,
    pub cdf: f64,
    pub second_deriv: f64,
}

impl NormalEval {
    pub fn at(z: f64) -> Result<Self> {
        check_finite(z)?;
        let pdf = pdf(z);
        Ok(Self { z, pdf, cdf: cdf(z), second_deriv: -z * pdf })
    }
}

#[inline]
pub fn pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

#[inline]
pub fn cdf(z: f64) -> f64 {
    if z <= -CDF_CLAMP {
        0.0
    } else if z >= CDF_CLAMP {
        1.0
    } else {
        0.5 * libm::erfc(-z * std::f64::consts::FRAC_1_SQRT_2)
    }
}

/// Φ''(z) = -z ϕ(z).
#[inline]
pub fn phi_second_unchecked(z: f64) -> f64 {
    -z * pdf(z)
}

fn check_finite(z: f64) -> Result<()> {
    if z.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("argument must be finite, got {z}")))
    }
}

pub fn std_normal_pdf(z: f64) -> Result<f64> {
    check_finite(z)?;
    Ok(pdf(z))
}

pub fn std_normal_cdf(z: f64) -> Result<f64> {
    check_finite(z)?;
    Ok(cdf(z))
}

pub fn phi_second(z: f64) -> Result<f64> {
    check_finite(z)?;
    Ok(phi_second_unchecked(z))
}

/// Φ⁻¹(p) by bisection on [`cdf`].
pub fn std_normal_inv_cdf(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("probability must lie in (0, 1), got {p}")));
    }
    let (mut lo, mut hi) = (-CDF_CLAMP, CDF_CLAMP);
    for _ in 0..INV_CDF_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = cdf(mid);
        if v == p {
            return Ok(mid);
        }
        if v < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Both ends bracket p; return whichever is closer in probability.
    Ok(if (cdf(lo) - p).abs() <= (cdf(hi) - p).abs() { lo } else { hi })
}

const TAIL_RESOLUTION: f64 = 1e-6;

/// Smallest z on a 1e-6 grid with 1 - Φ(z) ≤ `tail_mass`. The matching left
/// endpoint is its negation.
pub fn tail_endpoint(tail_mass: f64) -> Result<f64> {
    if !(tail_mass > 0.0 && tail_mass < 0.5) {
        return Err(Error::Domain(format!("tail mass must lie in (0, 0.5), got {tail_mass}")));
    }
    let upper_tail = |z: f64| cdf(-z);
    let exact = -std_normal_inv_cdf(tail_mass)?;
    let mut steps = (exact / TAIL_RESOLUTION).ceil().max(1.0);
    while upper_tail(steps * TAIL_RESOLUTION) > tail_mass {
        steps += 1.0;
    }
    while steps > 1.0 && upper_tail((steps - 1.0) * TAIL_RESOLUTION) <= tail_mass {
        steps -= 1.0;
    }
    Ok(steps * TAIL_RESOLUTION)
}
