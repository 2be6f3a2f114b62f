//! Arithmetic in the ring of 64-bit integers with fixed-point embedding of reals.
//!
//! Every operation wraps modulo 2^64. Reals are embedded by scaling with `2^l`
//! (`l` = precision bits) and read back through the two's-complement view.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bit width of the ring.
pub const RING_BITS: u32 = 64;

/// An element of Z_{2^64}.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(transparent)]
pub struct RingValue(pub u64);

impl RingValue {
    pub const ZERO: RingValue = RingValue(0);
    pub const ONE: RingValue = RingValue(1);

    #[inline]
    pub fn from_signed(v: i64) -> Self {
        RingValue(v as u64)
    }

    /// Two's-complement view of the raw value.
    #[inline]
    pub fn as_signed(self) -> i64 {
        self.0 as i64
    }

    /// Arithmetic right shift of the signed view.
    #[inline]
    pub fn shr_signed(self, bits: u32) -> Self {
        RingValue((self.as_signed() >> bits) as u64)
    }

    #[inline]
    pub fn msb(self) -> bool {
        self.0 >> 63 == 1
    }
}

impl fmt::Debug for RingValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "R({:#x})", self.0)
    }
}

impl From<u64> for RingValue {
    fn from(v: u64) -> Self {
        RingValue(v)
    }
}

impl Add for RingValue {
    type Output = RingValue;
    #[inline]
    fn add(self, rhs: RingValue) -> RingValue {
        RingValue(self.0.wrapping_add(rhs.0))
    }
}

impl Sub for RingValue {
    type Output = RingValue;
    #[inline]
    fn sub(self, rhs: RingValue) -> RingValue {
        RingValue(self.0.wrapping_sub(rhs.0))
    }
}

impl Mul for RingValue {
    type Output = RingValue;
    #[inline]
    fn mul(self, rhs: RingValue) -> RingValue {
        RingValue(self.0.wrapping_mul(rhs.0))
    }
}

impl Neg for RingValue {
    type Output = RingValue;
    #[inline]
    fn neg(self) -> RingValue {
        RingValue(self.0.wrapping_neg())
    }
}

impl AddAssign for RingValue {
    #[inline]
    fn add_assign(&mut self, rhs: RingValue) {
        *self = *self + rhs;
    }
}

impl SubAssign for RingValue {
    #[inline]
    fn sub_assign(&mut self, rhs: RingValue) {
        *self = *self - rhs;
    }
}

impl MulAssign for RingValue {
    #[inline]
    fn mul_assign(&mut self, rhs: RingValue) {
        *self = *self * rhs;
    }
}

impl Sum for RingValue {
    fn sum<I: Iterator<Item = RingValue>>(iter: I) -> RingValue {
        iter.fold(RingValue::ZERO, |a, b| a + b)
    }
}

impl<'a> Sum<&'a RingValue> for RingValue {
    fn sum<I: Iterator<Item = &'a RingValue>>(iter: I) -> RingValue {
        iter.fold(RingValue::ZERO, |a, b| a + *b)
    }
}

/// Fixed-point parameters. The ring width is always 64 bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedPointConfig {
    precision_bits: u32,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        FixedPointConfig { precision_bits: 20 }
    }
}

impl FixedPointConfig {
    pub fn new(precision_bits: u32) -> Result<Self> {
        if precision_bits == 0 || precision_bits >= RING_BITS - 1 {
            return Err(Error::Config(format!(
                "precision bits must lie in [1, {}), got {precision_bits}",
                RING_BITS - 1
            )));
        }
        Ok(FixedPointConfig { precision_bits })
    }

    #[inline]
    pub fn precision_bits(&self) -> u32 {
        self.precision_bits
    }

    #[inline]
    pub fn scale(&self) -> f64 {
        (1u64 << self.precision_bits) as f64
    }

    /// Largest magnitude accepted by [`encode`](Self::encode), exclusive.
    pub fn max_magnitude(&self) -> f64 {
        2f64.powi((RING_BITS - self.precision_bits - 1) as i32)
    }

    /// Encoding of 1.0.
    #[inline]
    pub fn one(&self) -> RingValue {
        RingValue(1u64 << self.precision_bits)
    }

    /// `round(x * 2^l)` with ties away from zero.
    pub fn encode(&self, x: f64) -> Result<RingValue> {
        if !x.is_finite() || x.abs() >= self.max_magnitude() {
            return Err(Error::Range(x));
        }
        // f64::round already rounds half away from zero.
        let scaled = (x * self.scale()).round();
        Ok(RingValue::from_signed(scaled as i64))
    }

    pub fn encode_slice(&self, xs: &[f64]) -> Result<Vec<RingValue>> {
        xs.iter().map(|&x| self.encode(x)).collect()
    }

    #[inline]
    pub fn decode(&self, v: RingValue) -> f64 {
        v.as_signed() as f64 / self.scale()
    }

    pub fn decode_slice(&self, vs: &[RingValue]) -> Vec<f64> {
        vs.iter().map(|&v| self.decode(v)).collect()
    }
}
