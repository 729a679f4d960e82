//! Fixed-point reference values for ϕ and Φ.
//!
//! Arithmetic is on integers scaled by 2^FRAC with `num-bigint`, so the only
//! rounding is the final conversion to f64. Inputs are taken at their exact
//! binary value. For z > 0:
//!   Φ(z) = 1/2 + ϕ(z)·Σ_k z^(2k+1)/(2k+1)!!   (every term positive)
//!   ϕ(z) = 1/(√(2π)·e^(z²/2))                  (positive exp series)
//! and Φ(−z) = 1 − Φ(z). π comes from Machin's formula.

#![allow(dead_code)]

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};

const FRAC: u32 = 224;

fn one() -> BigInt {
    BigInt::one() << FRAC
}

fn mul(a: &BigInt, b: &BigInt) -> BigInt {
    (a * b) >> FRAC
}

fn div(a: &BigInt, b: &BigInt) -> BigInt {
    (a << FRAC) / b
}

/// Exact fixed-point image of a finite double (|z| ≥ 2^-FRAC assumed).
fn from_f64(z: f64) -> BigInt {
    if z == 0.0 {
        return BigInt::zero();
    }
    let bits = z.abs().to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let mant = if exp == 0 { (bits & ((1 << 52) - 1)) << 1 } else { (bits & ((1 << 52) - 1)) | (1 << 52) };
    let shift = exp - 1075 + FRAC as i64;
    let v = if shift >= 0 { BigInt::from(mant) << shift as u32 } else { BigInt::from(mant) >> (-shift) as u32 };
    if z < 0.0 {
        -v
    } else {
        v
    }
}

fn to_f64(a: &BigInt) -> f64 {
    // Keep 64 leading bits, then scale; the truncation is far below 1 ulp
    // for the magnitudes produced here.
    let bits = a.bits() as i64;
    let drop = (bits - 64).max(0);
    let head = (a >> drop as u32).to_f64().expect("fits");
    head * 2f64.powi((drop - FRAC as i64) as i32)
}

/// atan(1/x) for integer x > 1.
fn atan_inv(x: u32) -> BigInt {
    let x = BigInt::from(x);
    let x2 = &x * &x;
    let mut power = one() / &x;
    let mut sum = power.clone();
    let mut k = 1u32;
    loop {
        power /= &x2;
        let term = &power / BigInt::from(2 * k + 1);
        if term.is_zero() {
            break;
        }
        if k % 2 == 1 {
            sum -= term;
        } else {
            sum += term;
        }
        k += 1;
    }
    sum
}

fn sqrt_two_pi() -> BigInt {
    let pi: BigInt = atan_inv(5) * BigInt::from(16) - atan_inv(239) * BigInt::from(4);
    let scaled: BigInt = (pi << 1) << FRAC;
    scaled.sqrt()
}

/// Σ_k w^k/k! for w ≥ 0.
fn exp_pos(w: &BigInt) -> BigInt {
    let mut term = one();
    let mut sum = one();
    let mut k = 1u32;
    while !term.is_zero() {
        term = mul(&term, w) / BigInt::from(k);
        sum += &term;
        k += 1;
    }
    sum
}

pub struct Oracle {
    sqrt_two_pi: BigInt,
}

impl Default for Oracle {
    fn default() -> Self {
        Self::new()
    }
}

impl Oracle {
    pub fn new() -> Self {
        Self { sqrt_two_pi: sqrt_two_pi() }
    }

    fn pdf_fixed(&self, z: &BigInt) -> BigInt {
        let half_sq = mul(z, z) >> 1;
        div(&one(), &mul(&self.sqrt_two_pi, &exp_pos(&half_sq)))
    }

    pub fn pdf(&self, z: f64) -> f64 {
        to_f64(&self.pdf_fixed(&from_f64(z)))
    }

    pub fn cdf(&self, z: f64) -> f64 {
        let zf = from_f64(z).abs();
        let z2 = mul(&zf, &zf);
        let mut term = zf.clone();
        let mut series = zf;
        let mut k = 1u32;
        while !term.is_zero() {
            term = mul(&term, &z2) / BigInt::from(2 * k + 1);
            series += &term;
            k += 1;
        }
        let half: BigInt = one() >> 1;
        let upper = mul(&self.pdf_fixed(&from_f64(z)), &series);
        let v: BigInt = if z >= 0.0 { half + upper } else { half - upper };
        to_f64(&v.max(BigInt::zero()))
    }
}
