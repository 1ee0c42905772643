//! Software binary floating point with a runtime-selected mantissa width.
//!
//! Only the handful of operations needed by the recurrence generator are
//! provided: add, sub, mul, div, sqrt and conversion to and from `f64`.
//! Values are `(-1)^neg * mant * 2^exp` with `mant` normalized to exactly
//! `bits` significant bits (or zero). Rounding is to nearest, ties away.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use std::cmp::Ordering;

/// Working precision shared by all operands of one computation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExtContext {
    bits: u64,
}

impl ExtContext {
    /// Precision that carries at least `digits` significant decimal digits.
    pub fn from_digits(digits: u32) -> Self {
        let bits = (digits as f64 * std::f64::consts::LOG2_10).ceil() as u64 + 4;
        Self { bits: bits.max(64) }
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn zero(&self) -> ExtFloat {
        ExtFloat {
            neg: false,
            mant: BigUint::zero(),
            exp: 0,
        }
    }

    /// Exact conversion; panics on non-finite input.
    pub fn from_f64(&self, x: f64) -> ExtFloat {
        assert!(x.is_finite(), "cannot convert {x} to an extended float");
        if x == 0.0 {
            return self.zero();
        }
        let bits = x.to_bits();
        let neg = bits >> 63 == 1;
        let raw_exp = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (m, e) = if raw_exp == 0 {
            (frac, -1074)
        } else {
            (frac | (1u64 << 52), raw_exp - 1075)
        };
        self.round(neg, BigUint::from(m), e)
    }

    fn round(&self, neg: bool, mant: BigUint, exp: i64) -> ExtFloat {
        if mant.is_zero() {
            return self.zero();
        }
        let len = mant.bits();
        match len.cmp(&self.bits) {
            Ordering::Greater => {
                let shift = len - self.bits;
                let half = BigUint::one() << (shift - 1);
                let mut m = (mant + half) >> shift;
                let mut e = exp + shift as i64;
                if m.bits() > self.bits {
                    m >>= 1u32;
                    e += 1;
                }
                ExtFloat { neg, mant: m, exp: e }
            }
            Ordering::Less => {
                let shift = self.bits - len;
                ExtFloat {
                    neg,
                    mant: mant << shift,
                    exp: exp - shift as i64,
                }
            }
            Ordering::Equal => ExtFloat { neg, mant, exp },
        }
    }

    pub fn add(&self, a: &ExtFloat, b: &ExtFloat) -> ExtFloat {
        if a.mant.is_zero() {
            return b.clone();
        }
        if b.mant.is_zero() {
            return a.clone();
        }
        let (hi, lo) = if a.exp >= b.exp { (a, b) } else { (b, a) };
        let gap = (hi.exp - lo.exp) as u64;
        if gap > self.bits + 2 {
            // lo is below the rounding position of hi
            if hi.top() - lo.top() > self.bits as i64 + 2 {
                return hi.clone();
            }
        }
        let hm = &hi.mant << gap;
        let lm = &lo.mant;
        if hi.neg == lo.neg {
            self.round(hi.neg, hm + lm, lo.exp)
        } else {
            match hm.cmp(lm) {
                Ordering::Greater => self.round(hi.neg, hm - lm, lo.exp),
                Ordering::Less => self.round(lo.neg, lm - hm, lo.exp),
                Ordering::Equal => self.zero(),
            }
        }
    }

    pub fn sub(&self, a: &ExtFloat, b: &ExtFloat) -> ExtFloat {
        self.add(a, &b.neg())
    }

    pub fn mul(&self, a: &ExtFloat, b: &ExtFloat) -> ExtFloat {
        if a.mant.is_zero() || b.mant.is_zero() {
            return self.zero();
        }
        self.round(a.neg != b.neg, &a.mant * &b.mant, a.exp + b.exp)
    }

    pub fn div(&self, a: &ExtFloat, b: &ExtFloat) -> ExtFloat {
        assert!(!b.mant.is_zero(), "division by zero");
        if a.mant.is_zero() {
            return self.zero();
        }
        let shift = self.bits + 2 + b.mant.bits();
        let q = (&a.mant << shift) / &b.mant;
        self.round(a.neg != b.neg, q, a.exp - b.exp - shift as i64)
    }

    /// Square root of a non-negative value.
    pub fn sqrt(&self, a: &ExtFloat) -> ExtFloat {
        assert!(!a.neg || a.mant.is_zero(), "sqrt of a negative value");
        if a.mant.is_zero() {
            return self.zero();
        }
        let mut shift = 2 * self.bits + 4;
        if (a.exp - shift as i64).rem_euclid(2) != 0 {
            shift += 1;
        }
        let m = (&a.mant << shift).sqrt();
        self.round(false, m, (a.exp - shift as i64) / 2)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExtFloat {
    neg: bool,
    mant: BigUint,
    exp: i64,
}

impl ExtFloat {
    pub fn is_zero(&self) -> bool {
        self.mant.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.neg && !self.mant.is_zero()
    }

    pub fn neg(&self) -> ExtFloat {
        ExtFloat {
            neg: !self.neg,
            mant: self.mant.clone(),
            exp: self.exp,
        }
    }

    // exponent of the leading bit
    fn top(&self) -> i64 {
        self.exp + self.mant.bits() as i64
    }

    /// Nearest `f64` (to within one ulp); saturates to ±inf or 0.
    pub fn to_f64(&self) -> f64 {
        if self.mant.is_zero() {
            return 0.0;
        }
        let len = self.mant.bits();
        let (top, e) = if len > 64 {
            let shift = len - 64;
            ((&self.mant >> shift).to_u64().unwrap_or(u64::MAX), self.exp + shift as i64)
        } else {
            (self.mant.to_u64().unwrap_or(u64::MAX), self.exp)
        };
        let v = scale2(top as f64, e);
        if self.neg {
            -v
        } else {
            v
        }
    }
}

/// `x * 2^e` without intermediate overflow for moderate `x`.
fn scale2(mut x: f64, mut e: i64) -> f64 {
    while e > 1000 {
        x *= 2f64.powi(1000);
        e -= 1000;
        if x.is_infinite() {
            return x;
        }
    }
    while e < -1000 {
        x *= 2f64.powi(-1000);
        e += 1000;
        if x == 0.0 {
            return x;
        }
    }
    x * 2f64.powi(e as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_f64() {
        let ctx = ExtContext::from_digits(40);
        for &x in &[1.0, -2.5, 1e-300, 3.0e300, std::f64::consts::PI, -1e-310] {
            assert_eq!(ctx.from_f64(x).to_f64(), x);
        }
    }

    #[test]
    fn arithmetic_beyond_double() {
        let ctx = ExtContext::from_digits(64);
        let one = ctx.from_f64(1.0);
        let tiny = ctx.from_f64(1e-40);
        let s = ctx.add(&one, &tiny);
        let back = ctx.sub(&s, &one);
        assert!((back.to_f64() - 1e-40).abs() < 1e-55);

        let two = ctx.from_f64(2.0);
        let r = ctx.sqrt(&two);
        let sq = ctx.mul(&r, &r);
        let err = ctx.sub(&sq, &two).to_f64().abs();
        assert!(err < 1e-60, "sqrt(2)^2 - 2 = {err}");

        let third = ctx.div(&one, &ctx.from_f64(3.0));
        let err = ctx.sub(&ctx.mul(&third, &ctx.from_f64(3.0)), &one).to_f64().abs();
        assert!(err < 1e-60);
    }

    #[test]
    fn cancellation_to_zero() {
        let ctx = ExtContext::from_digits(32);
        let a = ctx.from_f64(0.1);
        assert!(ctx.sub(&a, &a).is_zero());
        assert!(ctx.add(&a, &a.neg()).is_zero());
    }

    #[test]
    fn precision_grows_with_digits() {
        assert!(ExtContext::from_digits(64).bits() > ExtContext::from_digits(32).bits());
        assert!(ExtContext::from_digits(32).bits() >= 106);
    }
}
