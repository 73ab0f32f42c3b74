//! Floating-point numbers with arbitrary-size binary exponents.
//!
//! Parameter ensembles for the vertex-by-vertex counting engine involve
//! towers like `eps_{h} ~ eps_{h+1}^16` iterated dozens of times, giving
//! magnitudes near `2^(-10^26)`. Such values fit neither `f64` (exponent
//! range ±1074) nor literal big rationals (the bit size itself is
//! astronomical). [`Wide`] stores `m * 2^e` with a 53-bit mantissa and a
//! `BigInt` exponent: products, powers, roots and comparisons are cheap, and
//! exponent arithmetic is exact. All ensemble constructions keep factor-2
//! safety margins, far above the ~1e-15 relative mantissa error.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num::bigint::BigInt;
use num::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::scalar::Rat;

/// `m * 2^e` with `|m| ∈ [1,2)` (or `m = 0`), `e` an arbitrary integer.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Wide {
    m: f64,
    e: BigInt,
}

impl Wide {
    pub fn zero() -> Self {
        Wide { m: 0.0, e: BigInt::zero() }
    }

    pub fn one() -> Self {
        Wide { m: 1.0, e: BigInt::zero() }
    }

    pub fn is_zero(&self) -> bool {
        self.m == 0.0
    }

    pub fn is_negative(&self) -> bool {
        self.m < 0.0
    }

    /// `2^e`.
    pub fn pow2(e: impl Into<BigInt>) -> Self {
        Wide { m: 1.0, e: e.into() }
    }

    fn normalized(mut m: f64, mut e: BigInt) -> Self {
        assert!(m.is_finite(), "non-finite mantissa");
        if m == 0.0 {
            return Wide::zero();
        }
        // Bring |m| into [1,2); single ops leave it within a few octaves.
        let k = m.abs().log2().floor();
        if k.abs() > 1.0 {
            let k = k as i32;
            // Split the scaling to dodge f64 overflow/underflow at the edges.
            let half = k / 2;
            m = (m / 2f64.powi(half)) / 2f64.powi(k - half);
            e += k;
        }
        while m.abs() >= 2.0 {
            m /= 2.0;
            e += 1;
        }
        while m.abs() < 1.0 {
            m *= 2.0;
            e -= 1;
        }
        Wide { m, e }
    }

    pub fn from_f64(x: f64) -> Self {
        assert!(x.is_finite(), "non-finite value");
        Self::normalized(x, BigInt::zero())
    }

    pub fn from_u64(x: u64) -> Self {
        Self::from_f64(x as f64)
    }

    pub fn from_ratio(num: i64, den: i64) -> Self {
        assert!(den != 0);
        Self::from_f64(num as f64) / Self::from_f64(den as f64)
    }

    /// Nearest-in-53-bits conversion of a big rational.
    pub fn from_rat(r: &Rat) -> Self {
        fn approx(x: &BigInt) -> (f64, BigInt) {
            let bits = x.bits();
            if bits <= 53 {
                (x.to_f64().expect("small bigint to f64"), BigInt::zero())
            } else {
                let shift = bits - 53;
                let top = (x >> shift).to_f64().expect("53-bit bigint to f64");
                (top, BigInt::from(shift))
            }
        }
        if r.numer().is_zero() {
            return Wide::zero();
        }
        let (mn, en) = approx(&r.numer().abs());
        let (md, ed) = approx(&r.denom().abs());
        let sign = if (r.numer().is_negative()) != (r.denom().is_negative()) {
            -1.0
        } else {
            1.0
        };
        Self::normalized(sign * mn / md, en - ed)
    }

    /// Saturating conversion: values beyond the f64 range become `±inf`/`0`.
    pub fn to_f64(&self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        match self.e.to_i32() {
            Some(e) if (-1100..=1023).contains(&e) => {
                let half = e / 2;
                self.m * 2f64.powi(half) * 2f64.powi(e - half)
            }
            _ => {
                if self.e.is_negative() {
                    0.0
                } else if self.m < 0.0 {
                    f64::NEG_INFINITY
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Exact rational value (mantissa is dyadic), if the exponent is small
    /// enough to materialize. Astronomically small values round to `None`.
    pub fn to_rat(&self) -> Option<Rat> {
        if self.is_zero() {
            return Some(Rat::zero());
        }
        let e = self.e.to_i64()?;
        if e.abs() > 4096 {
            return None;
        }
        let m = Rat::from_float(self.m)?;
        let two = Rat::from_integer(BigInt::from(2));
        let scale = if e >= 0 {
            num::traits::Pow::pow(two, e as u64)
        } else {
            num::traits::Pow::pow(two, (-e) as u64).recip()
        };
        Some(m * scale)
    }

    pub fn mul(&self, o: &Wide) -> Wide {
        if self.is_zero() || o.is_zero() {
            return Wide::zero();
        }
        Self::normalized(self.m * o.m, &self.e + &o.e)
    }

    pub fn div(&self, o: &Wide) -> Wide {
        assert!(!o.is_zero(), "wide division by zero");
        if self.is_zero() {
            return Wide::zero();
        }
        Self::normalized(self.m / o.m, &self.e - &o.e)
    }

    pub fn add(&self, o: &Wide) -> Wide {
        if self.is_zero() {
            return o.clone();
        }
        if o.is_zero() {
            return self.clone();
        }
        let (hi, lo) = if self.e >= o.e { (self, o) } else { (o, self) };
        let delta = (&hi.e - &lo.e).to_i64().unwrap_or(i64::MAX);
        if delta > 64 {
            // The smaller addend is below mantissa resolution.
            return hi.clone();
        }
        let m = hi.m + lo.m / 2f64.powi(delta as i32);
        Self::normalized(m, hi.e.clone())
    }

    pub fn sub(&self, o: &Wide) -> Wide {
        self.add(&o.neg())
    }

    pub fn neg(&self) -> Wide {
        Wide { m: -self.m, e: self.e.clone() }
    }

    pub fn abs(&self) -> Wide {
        Wide { m: self.m.abs(), e: self.e.clone() }
    }

    /// `self^n` for a (possibly huge) nonnegative integer power.
    pub fn powu(&self, n: impl Into<BigInt>) -> Wide {
        let mut n: BigInt = n.into();
        assert!(!n.is_negative(), "negative power");
        let mut base = self.clone();
        let mut acc = Wide::one();
        while !n.is_zero() {
            if (&n & BigInt::from(1)) == BigInt::from(1) {
                acc = acc.mul(&base);
            }
            n >>= 1;
            if !n.is_zero() {
                base = base.mul(&base);
            }
        }
        acc
    }

    /// `self^(1/n)` for nonnegative values.
    pub fn nth_root(&self, n: u32) -> Wide {
        assert!(n >= 1);
        assert!(self.m >= 0.0, "root of a negative value");
        if self.is_zero() || n == 1 {
            return self.clone();
        }
        let n_big = BigInt::from(n);
        // Euclidean split e = q*n + r with 0 <= r < n.
        let mut q = &self.e / &n_big;
        let mut r = &self.e - &q * &n_big;
        if r.is_negative() {
            r += &n_big;
            q -= 1;
        }
        let r = r.to_i32().expect("root remainder fits i32");
        let scaled = self.m * 2f64.powi(r);
        Self::normalized(scaled.powf(1.0 / n as f64), q * 1)
    }

    pub fn recip(&self) -> Wide {
        Wide::one().div(self)
    }

    pub fn min(&self, o: &Wide) -> Wide {
        if self <= o {
            self.clone()
        } else {
            o.clone()
        }
    }

    pub fn max(&self, o: &Wide) -> Wide {
        if self >= o {
            self.clone()
        } else {
            o.clone()
        }
    }

    /// Binary log as (approximate) f64 plus the exact exponent part.
    pub fn log2_approx(&self) -> Option<(f64, BigInt)> {
        if self.is_zero() || self.m < 0.0 {
            return None;
        }
        Some((self.m.log2(), self.e.clone()))
    }
}

impl PartialEq for Wide {
    fn eq(&self, other: &Self) -> bool {
        self.partial_cmp(other) == Some(Ordering::Equal)
    }
}

impl PartialOrd for Wide {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        let sa = if self.is_zero() { 0 } else if self.m < 0.0 { -1 } else { 1 };
        let sb = if other.is_zero() { 0 } else if other.m < 0.0 { -1 } else { 1 };
        if sa != sb {
            return sa.partial_cmp(&sb);
        }
        if sa == 0 {
            return Some(Ordering::Equal);
        }
        let ord = match self.e.cmp(&other.e) {
            Ordering::Equal => self.m.abs().partial_cmp(&other.m.abs())?,
            o => o,
        };
        Some(if sa < 0 { ord.reverse() } else { ord })
    }
}

impl std::ops::Mul for Wide {
    type Output = Wide;
    fn mul(self, rhs: Wide) -> Wide {
        Wide::mul(&self, &rhs)
    }
}

impl std::ops::Div for Wide {
    type Output = Wide;
    fn div(self, rhs: Wide) -> Wide {
        Wide::div(&self, &rhs)
    }
}

impl std::ops::Add for Wide {
    type Output = Wide;
    fn add(self, rhs: Wide) -> Wide {
        Wide::add(&self, &rhs)
    }
}

impl std::ops::Sub for Wide {
    type Output = Wide;
    fn sub(self, rhs: Wide) -> Wide {
        Wide::sub(&self, &rhs)
    }
}

impl fmt::Display for Wide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        write!(f, "{:.17}*2^{}", self.m, self.e)
    }
}

impl FromStr for Wide {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s == "0" {
            return Ok(Wide::zero());
        }
        if let Some((m, e)) = s.split_once("*2^") {
            let m: f64 = m.parse().map_err(|e| format!("bad mantissa: {e}"))?;
            let e: BigInt = e.parse().map_err(|e| format!("bad exponent: {e}"))?;
            if !m.is_finite() {
                return Err("non-finite mantissa".into());
            }
            Ok(Wide::normalized(m, e))
        } else {
            let x: f64 = s.parse().map_err(|e| format!("bad number: {e}"))?;
            if !x.is_finite() {
                return Err("non-finite value".into());
            }
            Ok(Wide::from_f64(x))
        }
    }
}

impl TryFrom<String> for Wide {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<Wide> for String {
    fn from(w: Wide) -> String {
        w.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_basics() {
        let a = Wide::from_f64(0.375);
        let b = Wide::from_f64(8.0);
        assert_eq!((a.clone() * b.clone()).to_f64(), 3.0);
        assert_eq!((b.clone() / a.clone()).to_f64(), 8.0 / 0.375);
        assert_eq!((a.clone() + b.clone()).to_f64(), 8.375);
        assert_eq!((b - a).to_f64(), 7.625);
    }

    #[test]
    fn huge_exponents_survive() {
        // 2^(-10^20), representable only with a big exponent.
        let tiny = Wide::pow2(BigInt::from(-100_000_000_000_000_000_000i128));
        let sq = tiny.powu(2u32);
        assert!(sq < tiny);
        assert!(!sq.is_zero());
        assert_eq!(sq.to_f64(), 0.0); // saturates
        let back = sq.nth_root(2);
        assert!(back.div(&tiny).to_f64() - 1.0 < 1e-12);
    }

    #[test]
    fn ordering_and_sums() {
        let x = Wide::from_f64(1.0);
        let y = Wide::pow2(BigInt::from(-200));
        assert!(y < x);
        // Far-apart sum collapses to the bigger addend.
        assert_eq!((x.clone() + y.clone()).to_f64(), 1.0);
        assert!((x.clone() + y.clone()) >= x);
        let z = Wide::from_f64(3.0) + Wide::from_f64(-3.0);
        assert!(z.is_zero());
    }

    #[test]
    fn roots_fold_remainder() {
        let x = Wide::pow2(BigInt::from(-4304));
        let r = x.nth_root(16);
        assert_eq!(r, Wide::pow2(BigInt::from(-269)));
        let y = Wide::from_f64(2.25);
        assert!((y.nth_root(2).to_f64() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn string_roundtrip() {
        for v in [Wide::zero(), Wide::from_f64(-1.75), Wide::pow2(BigInt::from(-123456789))] {
            let s = v.to_string();
            let w: Wide = s.parse().unwrap();
            assert_eq!(v, w, "{s}");
        }
        let p: Wide = "0.25".parse().unwrap();
        assert_eq!(p, Wide::from_f64(0.25));
    }

    #[test]
    fn rational_conversion() {
        let r = Rat::new(BigInt::from(1), BigInt::from(3));
        let w = Wide::from_rat(&r);
        assert!((w.to_f64() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(Wide::from_rat(&Rat::from_float(0.5).unwrap()).to_rat().unwrap(),
                   Rat::from_float(0.5).unwrap());
        let neg = Rat::new(BigInt::from(-7), BigInt::from(4));
        assert_eq!(Wide::from_rat(&neg).to_f64(), -1.75);
    }
}
