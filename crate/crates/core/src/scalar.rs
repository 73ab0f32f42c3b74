//! Numeric backend abstraction.
//!
//! All counting and verification code is generic over [`Scalar`]. Two backends
//! are provided: arbitrary-precision rationals ([`Rat`]) for exact identity
//! checking, and `f64` for Monte Carlo experiments. Comparisons in float mode
//! use a relative tolerance of `1e-9`; in exact mode they are literal.

use std::fmt::{Debug, Display};
use std::ops::{Add, Div, Mul, Neg, Sub};

use num::bigint::BigInt;
use num::rational::Ratio;
use num::ToPrimitive;

/// Arbitrary-precision rational scalar.
pub type Rat = Ratio<BigInt>;

/// Relative tolerance used by all float-mode comparisons.
pub const F64_REL_TOL: f64 = 1e-9;

/// Scalar arithmetic used by graphs, counts and verdicts.
pub trait Scalar:
    Clone
    + PartialEq
    + PartialOrd
    + Debug
    + Display
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// Whether arithmetic (and hence comparison) is exact.
    const EXACT: bool;

    fn zero() -> Self;
    fn one() -> Self;
    fn is_zero(&self) -> bool;
    fn from_u64(n: u64) -> Self;
    fn from_ratio(num: i64, den: i64) -> Self;
    /// Exact conversion of a finite `f64` (every finite float is dyadic).
    fn from_f64(x: f64) -> Self;
    fn to_f64(&self) -> f64;

    fn powu(&self, mut n: u64) -> Self {
        let mut base = self.clone();
        let mut acc = Self::one();
        while n > 0 {
            if n & 1 == 1 {
                acc = acc * base.clone();
            }
            n >>= 1;
            if n > 0 {
                base = base.clone() * base;
            }
        }
        acc
    }

    /// Mode-appropriate equality: literal in exact mode, relative `1e-9` in float mode.
    fn tol_eq(&self, other: &Self) -> bool;

    /// Mode-appropriate `self <= other` (float mode allows `1e-9` relative slack).
    fn tol_le(&self, other: &Self) -> bool;

    /// `|self|`.
    fn abs(&self) -> Self {
        if *self < Self::zero() {
            -self.clone()
        } else {
            self.clone()
        }
    }

    /// An upper bound on `sqrt(self)` (requires `self >= 0`). Exact mode
    /// returns a rational within `2^-120` above the true root, so bounds
    /// computed with it are valid and essentially tight; float mode pads the
    /// correctly-rounded square root by a few ulps.
    fn sqrt_upper(&self) -> Self;

    /// Canonical interchange form: an integer or `numerator/denominator`
    /// string in exact mode, the shortest round-trip decimal in float mode.
    fn to_repr(&self) -> String {
        format!("{self}")
    }

    /// Parses integers, fractions `a/b` and decimal strings (optionally
    /// signed, optionally with a power-of-ten exponent).
    fn from_repr(s: &str) -> std::result::Result<Self, String>;
}

fn parse_decimal_rat(t: &str) -> std::result::Result<Rat, String> {
    let (mantissa, exp) = match t.split_once(['e', 'E']) {
        Some((m, e)) => (m, e.parse::<i64>().map_err(|err| format!("bad exponent in {t:?}: {err}"))?),
        None => (t, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(d) => (true, d),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(format!("empty number {t:?}"));
    }
    if !int_part.bytes().all(|c| c.is_ascii_digit()) || !frac_part.bytes().all(|c| c.is_ascii_digit()) {
        return Err(format!("invalid number {t:?}"));
    }
    let scale = exp - frac_part.len() as i64;
    if scale.unsigned_abs() > 10_000 {
        return Err(format!("exponent out of range in {t:?}"));
    }
    let n: BigInt = format!("{int_part}{frac_part}")
        .parse()
        .map_err(|err| format!("invalid number {t:?}: {err}"))?;
    let mut r = Ratio::from_integer(n);
    let pow = Ratio::from_integer(BigInt::from(10).pow(scale.unsigned_abs() as u32));
    if scale >= 0 {
        r *= pow;
    } else {
        r /= pow;
    }
    Ok(if negative { -r } else { r })
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn from_u64(n: u64) -> Self {
        n as f64
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(&self) -> f64 {
        *self
    }

    fn tol_eq(&self, other: &Self) -> bool {
        let scale = 1f64.max(self.abs()).max(other.abs());
        (self - other).abs() <= F64_REL_TOL * scale
    }

    fn tol_le(&self, other: &Self) -> bool {
        let scale = 1f64.max(self.abs()).max(other.abs());
        *self <= other + F64_REL_TOL * scale
    }

    fn sqrt_upper(&self) -> Self {
        assert!(*self >= 0.0, "sqrt_upper of negative value");
        f64::sqrt(*self) * (1.0 + 4.0 * f64::EPSILON)
    }

    fn from_repr(s: &str) -> std::result::Result<Self, String> {
        let t = s.trim();
        if let Some((a, b)) = t.split_once('/') {
            let n: f64 = a.trim().parse().map_err(|e| format!("bad numerator in {t:?}: {e}"))?;
            let d: f64 = b.trim().parse().map_err(|e| format!("bad denominator in {t:?}: {e}"))?;
            if d == 0.0 {
                return Err(format!("zero denominator in {t:?}"));
            }
            return Ok(n / d);
        }
        t.parse().map_err(|e| format!("invalid number {t:?}: {e}"))
    }
}

impl Scalar for Rat {
    const EXACT: bool = true;

    fn zero() -> Self {
        num::Zero::zero()
    }
    fn one() -> Self {
        num::One::one()
    }
    fn is_zero(&self) -> bool {
        num::Zero::is_zero(self)
    }
    fn from_u64(n: u64) -> Self {
        Ratio::from_integer(BigInt::from(n))
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        Ratio::new(BigInt::from(num), BigInt::from(den))
    }
    fn from_f64(x: f64) -> Self {
        Ratio::from_float(x).expect("non-finite float cannot become a rational")
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn tol_eq(&self, other: &Self) -> bool {
        self == other
    }

    fn tol_le(&self, other: &Self) -> bool {
        self <= other
    }

    fn sqrt_upper(&self) -> Self {
        assert!(*self >= <Rat as Scalar>::zero(), "sqrt_upper of negative value");
        // sqrt(p/q) = sqrt(p*q)/q <= (isqrt(p*q*2^240) + 1) / (q*2^120),
        // with no +1 when the root is exact (so perfect squares stay exact).
        let p = self.numer().clone();
        let q = self.denom().clone();
        let scaled: BigInt = (&p * &q) << 240;
        let mut root = scaled.sqrt();
        if &root * &root != scaled {
            root += 1;
        }
        Ratio::new(root, q << 120)
    }

    fn from_repr(s: &str) -> std::result::Result<Self, String> {
        let t = s.trim();
        if let Some((a, b)) = t.split_once('/') {
            let n: BigInt = a.trim().parse().map_err(|e| format!("bad numerator in {t:?}: {e}"))?;
            let d: BigInt = b.trim().parse().map_err(|e| format!("bad denominator in {t:?}: {e}"))?;
            if num::Zero::is_zero(&d) {
                return Err(format!("zero denominator in {t:?}"));
            }
            return Ok(Ratio::new(n, d));
        }
        parse_decimal_rat(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_roundtrip_and_pow() {
        let x = Rat::from_ratio(3, 4);
        assert_eq!(x.powu(3), Rat::from_ratio(27, 64));
        assert_eq!(Rat::from_f64(0.5), Rat::from_ratio(1, 2));
        assert!(Rat::from_ratio(1, 3).tol_le(&Rat::from_ratio(1, 2)));
        assert!(!Rat::from_ratio(1, 2).tol_le(&Rat::from_ratio(1, 3)));
    }

    #[test]
    fn float_tolerance() {
        assert!(1.0f64.tol_eq(&(1.0 + 1e-12)));
        assert!(!1.0f64.tol_eq(&1.001));
        assert!(1.0f64.tol_le(&(1.0 - 1e-12)));
    }

    #[test]
    fn pow_zero_is_one() {
        assert_eq!(0.5f64.powu(0), 1.0);
        assert_eq!(Rat::zero().powu(0), Rat::one());
    }

    #[test]
    fn repr_roundtrip_and_parsing() {
        assert_eq!(Rat::from_ratio(3, 4).to_repr(), "3/4");
        assert_eq!(Rat::from_repr("3/4").unwrap(), Rat::from_ratio(3, 4));
        assert_eq!(Rat::from_repr("-2").unwrap(), Rat::from_ratio(-2, 1));
        assert_eq!(Rat::from_repr("0.25").unwrap(), Rat::from_ratio(1, 4));
        assert_eq!(Rat::from_repr("-1.5e-3").unwrap(), Rat::from_ratio(-3, 2000));
        assert_eq!(Rat::from_repr("1E2").unwrap(), Rat::from_u64(100));
        for bad in ["", "x", "1/0", "1.2.3", "0x10"] {
            assert!(Rat::from_repr(bad).is_err(), "{bad:?} should not parse");
        }
        assert_eq!(f64::from_repr("3/4").unwrap(), 0.75);
        assert_eq!(f64::from_repr("0.625").unwrap(), 0.625);
        assert_eq!(f64::from_repr(&0.1f64.to_repr()).unwrap(), 0.1);
        assert!(f64::from_repr("1/0").is_err());
    }

    #[test]
    fn sqrt_upper_bounds_are_valid_and_tight() {
        for (n, d) in [(0i64, 1i64), (1, 4), (2, 1), (9, 1), (7, 13)] {
            let x = Rat::from_ratio(n, d);
            let r = x.sqrt_upper();
            assert!(r.clone() * r.clone() >= x, "must bound the root from above");
            let slack = Rat::from_ratio(1, 1 << 40);
            let lower = if r > slack { r - slack } else { Rat::zero() };
            assert!(lower.clone() * lower <= x, "must be within 2^-40 of the root");
        }
        let f = 2.0f64.sqrt_upper();
        assert!(f * f >= 2.0);
        assert!((f - 2.0f64.sqrt()).abs() < 1e-14);
    }
}
