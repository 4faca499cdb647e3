//! Exact rational scalars.
//!
//! Two rational types live here:
//!
//! - [`Scalar`]: arbitrary-precision rational, the coefficient field of every
//!   distribution, matrix, and state vector.
//! - [`Rat`]: a small `Copy` rational used for exponents and weights.  Exponent
//!   arithmetic is additive and stays tiny, so a machine-word rational with
//!   checked arithmetic is exact and much cheaper as a map key.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

/// Arbitrary-precision rational number in canonical reduced form
/// (gcd 1, positive denominator; both maintained by `num-rational`).
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Scalar(BigRational);

impl Scalar {
    pub const fn from_raw(r: BigRational) -> Self {
        Scalar(r)
    }

    pub fn from_int(n: i64) -> Self {
        Scalar(BigRational::from_integer(BigInt::from(n)))
    }

    /// `p/q`; panics if `q == 0`.
    pub fn ratio(p: i64, q: i64) -> Self {
        assert!(q != 0, "zero denominator");
        Scalar(BigRational::new(BigInt::from(p), BigInt::from(q)))
    }

    pub fn zero() -> Self {
        Scalar(BigRational::zero())
    }

    pub fn one() -> Self {
        Scalar(BigRational::one())
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.0.is_one()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn is_integer(&self) -> bool {
        self.0.is_integer()
    }

    pub fn recip(&self) -> Self {
        assert!(!self.is_zero(), "division by zero");
        Scalar(self.0.recip())
    }

    pub fn abs(&self) -> Self {
        Scalar(self.0.abs())
    }

    pub fn inner(&self) -> &BigRational {
        &self.0
    }

    pub fn from_rat(r: Rat) -> Self {
        Scalar::ratio(r.numer(), r.denom())
    }

    /// Renders as `p` for integers and `p/q` otherwise.
    pub fn render(&self) -> String {
        if self.0.is_integer() {
            self.0.numer().to_string()
        } else {
            format!("{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl serde::Serialize for Scalar {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.render())
    }
}

macro_rules! scalar_binop {
    ($trait:ident, $m:ident) => {
        impl $trait for Scalar {
            type Output = Scalar;
            fn $m(self, rhs: Scalar) -> Scalar {
                Scalar((self.0).$m(rhs.0))
            }
        }
        impl<'a> $trait<&'a Scalar> for &Scalar {
            type Output = Scalar;
            fn $m(self, rhs: &'a Scalar) -> Scalar {
                Scalar((&self.0).$m(&rhs.0))
            }
        }
        impl $trait<&Scalar> for Scalar {
            type Output = Scalar;
            fn $m(self, rhs: &Scalar) -> Scalar {
                Scalar((self.0).$m(&rhs.0))
            }
        }
        impl $trait<Scalar> for &Scalar {
            type Output = Scalar;
            fn $m(self, rhs: Scalar) -> Scalar {
                Scalar((&self.0).$m(rhs.0))
            }
        }
    };
}

scalar_binop!(Add, add);
scalar_binop!(Sub, sub);
scalar_binop!(Mul, mul);
scalar_binop!(Div, div);

impl Neg for Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        Scalar(-self.0)
    }
}

impl Neg for &Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        Scalar(-&self.0)
    }
}

impl AddAssign<&Scalar> for Scalar {
    fn add_assign(&mut self, rhs: &Scalar) {
        let lhs = std::mem::take(&mut self.0);
        self.0 = lhs + &rhs.0;
    }
}

impl SubAssign<&Scalar> for Scalar {
    fn sub_assign(&mut self, rhs: &Scalar) {
        let lhs = std::mem::take(&mut self.0);
        self.0 = lhs - &rhs.0;
    }
}

/// Small exact rational with machine-word components.
///
/// Used for exponents, weights, and coset representatives.  All arithmetic is
/// overflow-checked; exponent bookkeeping never approaches the i64 range in
/// practice, and an overflow panics rather than wrapping.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rat {
    num: i64,
    den: i64, // > 0, gcd(num, den) == 1
}

impl Rat {
    pub const ZERO: Rat = Rat { num: 0, den: 1 };
    pub const ONE: Rat = Rat { num: 1, den: 1 };

    pub fn new(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        let g = gcd_i64(num.unchecked_abs_safe(), den.unchecked_abs_safe());
        let (mut num, mut den) = (num / g, den / g);
        if den < 0 {
            num = num.checked_neg().expect("exponent overflow");
            den = den.checked_neg().expect("exponent overflow");
        }
        Rat { num, den }
    }

    pub fn int(n: i64) -> Self {
        Rat { num: n, den: 1 }
    }

    pub fn numer(&self) -> i64 {
        self.num
    }

    pub fn denom(&self) -> i64 {
        self.den
    }

    pub fn is_zero(&self) -> bool {
        self.num == 0
    }

    pub fn is_integer(&self) -> bool {
        self.den == 1
    }

    pub fn is_natural(&self) -> bool {
        self.den == 1 && self.num >= 0
    }

    pub fn as_integer(&self) -> Option<i64> {
        (self.den == 1).then_some(self.num)
    }

    pub fn floor(&self) -> i64 {
        self.num.div_euclid(self.den)
    }

    /// Fractional part in `[0, 1)`: the canonical coset representative mod Z.
    pub fn frac(&self) -> Rat {
        Rat::new(self.num.rem_euclid(self.den), self.den)
    }

    pub fn min(self, other: Rat) -> Rat {
        if self <= other {
            self
        } else {
            other
        }
    }

    pub fn max(self, other: Rat) -> Rat {
        if self >= other {
            self
        } else {
            other
        }
    }

    pub fn to_scalar(&self) -> Scalar {
        Scalar::ratio(self.num, self.den)
    }

    pub fn render(&self) -> String {
        if self.den == 1 {
            self.num.to_string()
        } else {
            format!("{}/{}", self.num, self.den)
        }
    }

    /// Parses `p` or `p/q`.
    pub fn parse(s: &str) -> Option<Rat> {
        let s = s.trim();
        match s.split_once('/') {
            Some((p, q)) => {
                let p: i64 = p.trim().parse().ok()?;
                let q: i64 = q.trim().parse().ok()?;
                (q != 0).then(|| Rat::new(p, q))
            }
            None => s.parse::<i64>().ok().map(Rat::int),
        }
    }
}

trait AbsSafe {
    fn unchecked_abs_safe(self) -> u64;
}

impl AbsSafe for i64 {
    fn unchecked_abs_safe(self) -> u64 {
        self.unsigned_abs()
    }
}

fn gcd_i64(a: u64, b: u64) -> i64 {
    let mut a = a;
    let mut b = b;
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    i64::try_from(a.max(1)).expect("exponent overflow")
}

impl Add for Rat {
    type Output = Rat;
    fn add(self, rhs: Rat) -> Rat {
        let num = self
            .num
            .checked_mul(rhs.den)
            .and_then(|x| rhs.num.checked_mul(self.den).and_then(|y| x.checked_add(y)))
            .expect("exponent overflow");
        let den = self.den.checked_mul(rhs.den).expect("exponent overflow");
        Rat::new(num, den)
    }
}

impl Sub for Rat {
    type Output = Rat;
    fn sub(self, rhs: Rat) -> Rat {
        self + (-rhs)
    }
}

impl Mul for Rat {
    type Output = Rat;
    fn mul(self, rhs: Rat) -> Rat {
        let num = self.num.checked_mul(rhs.num).expect("exponent overflow");
        let den = self.den.checked_mul(rhs.den).expect("exponent overflow");
        Rat::new(num, den)
    }
}

impl Neg for Rat {
    type Output = Rat;
    fn neg(self) -> Rat {
        Rat {
            num: self.num.checked_neg().expect("exponent overflow"),
            den: self.den,
        }
    }
}

impl PartialOrd for Rat {
    fn partial_cmp(&self, other: &Rat) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Rat {
    fn cmp(&self, other: &Rat) -> Ordering {
        let lhs = (self.num as i128) * (other.den as i128);
        let rhs = (other.num as i128) * (self.den as i128);
        lhs.cmp(&rhs)
    }
}

impl fmt::Display for Rat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl fmt::Debug for Rat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl serde::Serialize for Rat {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.render())
    }
}

/// Generalized binomial coefficient `n(n-1)...(n-i+1) / i!` for rational `n`.
///
/// Returns 1 for `i = 0`.
pub fn gen_binom(n: Rat, i: u32) -> Scalar {
    let mut acc = Scalar::one();
    let mut factor = n.to_scalar();
    for k in 0..i {
        acc = acc * &factor / Scalar::from_int(i64::from(k) + 1);
        factor = factor - Scalar::one();
    }
    acc
}

/// `1/n!`, the scalar of the divided power `a^{(n)} = a^n/n!`.
pub fn inv_factorial(n: u32) -> Scalar {
    let mut acc = Scalar::one();
    for k in 1..=i64::from(n) {
        acc = acc / Scalar::from_int(k);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gen_binom_integer() {
        assert_eq!(gen_binom(Rat::int(3), 1), Scalar::from_int(3));
        assert_eq!(gen_binom(Rat::int(4), 2), Scalar::from_int(6));
        assert_eq!(gen_binom(Rat::int(2), 5), Scalar::zero());
    }

    #[test]
    fn gen_binom_negative() {
        // (-2)(-3)(-4)/6 = -4
        assert_eq!(gen_binom(Rat::int(-2), 3), Scalar::from_int(-4));
    }

    #[test]
    fn gen_binom_half() {
        // (1/2)(-1/2)/2 = -1/8
        assert_eq!(gen_binom(Rat::new(1, 2), 2), Scalar::ratio(-1, 8));
    }

    #[test]
    fn gen_binom_zero_index() {
        assert_eq!(gen_binom(Rat::new(-7, 3), 0), Scalar::one());
    }

    #[test]
    fn inv_factorials() {
        assert_eq!(inv_factorial(0), Scalar::one());
        assert_eq!(inv_factorial(3), Scalar::ratio(1, 6));
        assert_eq!(inv_factorial(5), Scalar::ratio(1, 120));
    }

    #[test]
    fn rat_canonical_form() {
        let r = Rat::new(6, -4);
        assert_eq!(r.numer(), -3);
        assert_eq!(r.denom(), 2);
        assert_eq!(Rat::new(0, 5), Rat::ZERO);
    }

    #[test]
    fn rat_frac_coset() {
        assert_eq!(Rat::new(-1, 2).frac(), Rat::new(1, 2));
        assert_eq!(Rat::new(7, 2).frac(), Rat::new(1, 2));
        assert_eq!(Rat::int(-3).frac(), Rat::ZERO);
    }

    #[test]
    fn rat_parse_render() {
        assert_eq!(Rat::parse("-5/10"), Some(Rat::new(-1, 2)));
        assert_eq!(Rat::parse("4"), Some(Rat::int(4)));
        assert_eq!(Rat::parse("1/0"), None);
        assert_eq!(Rat::new(-1, 2).render(), "-1/2");
    }

    #[test]
    fn scalar_render() {
        assert_eq!(Scalar::ratio(-4, 6).render(), "-2/3");
        assert_eq!(Scalar::from_int(7).render(), "7");
    }
}
