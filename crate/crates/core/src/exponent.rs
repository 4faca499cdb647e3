//! Exponent pairs, coset keys, parities, and sign conventions.

use crate::error::CalcError;
use crate::scalar::Rat;
use serde::Serialize;
use std::fmt;
use std::ops::{Add, Neg, Sub};

/// An exponent pair `(n, nbar)` indexing the two sectors of a variable.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ExpPair {
    pub n: Rat,
    pub nbar: Rat,
}

impl ExpPair {
    pub const ZERO: ExpPair = ExpPair {
        n: Rat::ZERO,
        nbar: Rat::ZERO,
    };

    pub fn new(n: Rat, nbar: Rat) -> Self {
        ExpPair { n, nbar }
    }

    pub fn int(n: i64, nbar: i64) -> Self {
        ExpPair {
            n: Rat::int(n),
            nbar: Rat::int(nbar),
        }
    }

    pub fn minus_one() -> Self {
        ExpPair::int(-1, -1)
    }

    pub fn total(&self) -> Rat {
        self.n + self.nbar
    }

    /// True when both components are non-negative integers.
    pub fn is_natural(&self) -> bool {
        self.n.is_natural() && self.nbar.is_natural()
    }

    /// True when `n - nbar` is an integer, i.e. the sector sign
    /// `(-1)^(n - nbar)` is defined.
    pub fn has_integral_difference(&self) -> bool {
        (self.n - self.nbar).is_integer()
    }

    pub fn coset(&self) -> CosetKey {
        CosetKey {
            n: self.n.frac(),
            nbar: self.nbar.frac(),
        }
    }

    /// The mode index of the coefficient at exponent `self`: `vn = -e - 1`.
    pub fn to_mode(&self) -> ExpPair {
        ExpPair::new(-(self.n) - Rat::ONE, -(self.nbar) - Rat::ONE)
    }

    /// The exponent carrying the coefficient of mode `self`: `e = -vn - 1`.
    pub fn to_exponent(&self) -> ExpPair {
        self.to_mode()
    }

    pub fn render(&self) -> String {
        format!("({}, {})", self.n.render(), self.nbar.render())
    }
}

impl Add for ExpPair {
    type Output = ExpPair;
    fn add(self, rhs: ExpPair) -> ExpPair {
        ExpPair::new(self.n + rhs.n, self.nbar + rhs.nbar)
    }
}

impl Sub for ExpPair {
    type Output = ExpPair;
    fn sub(self, rhs: ExpPair) -> ExpPair {
        ExpPair::new(self.n - rhs.n, self.nbar - rhs.nbar)
    }
}

impl Neg for ExpPair {
    type Output = ExpPair;
    fn neg(self) -> ExpPair {
        ExpPair::new(-self.n, -self.nbar)
    }
}

impl fmt::Display for ExpPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl fmt::Debug for ExpPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl Serialize for ExpPair {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.render())
    }
}

/// Canonical representative of `vn + Z^2` with both components in `[0, 1)`.
///
/// Two exponent pairs map to equal keys iff they differ by integers
/// componentwise.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CosetKey {
    n: Rat,
    nbar: Rat,
}

impl CosetKey {
    pub fn of(pair: ExpPair) -> Self {
        pair.coset()
    }

    pub fn n(&self) -> Rat {
        self.n
    }

    pub fn nbar(&self) -> Rat {
        self.nbar
    }

    pub fn representative(&self) -> ExpPair {
        ExpPair::new(self.n, self.nbar)
    }

    pub fn render(&self) -> String {
        format!("({}, {})+Z2", self.n.render(), self.nbar.render())
    }
}

impl fmt::Debug for CosetKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl fmt::Display for CosetKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Super vector space parity.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn is_odd(&self) -> bool {
        matches!(self, Parity::Odd)
    }

    pub fn flip(&self) -> Parity {
        match self {
            Parity::Even => Parity::Odd,
            Parity::Odd => Parity::Even,
        }
    }
}

impl std::ops::Mul for Parity {
    type Output = Parity;
    fn mul(self, rhs: Parity) -> Parity {
        match (self, rhs) {
            (Parity::Odd, Parity::Odd) => Parity::Even,
            (Parity::Even, p) => p,
            (p, Parity::Even) => p,
        }
    }
}

/// `+1` for an even pair, `-1` for an odd-odd pair exchange.
pub fn exchange_sign(a: Parity, b: Parity) -> i8 {
    if a.is_odd() && b.is_odd() {
        -1
    } else {
        1
    }
}

/// The integral-difference sign `(-1)^(n - nbar)`.
///
/// Defined exactly when the difference is an integer.
pub fn int_sign(vn: ExpPair) -> Result<i8, CalcError> {
    let diff = vn.n - vn.nbar;
    match diff.as_integer() {
        Some(d) => Ok(if d.rem_euclid(2) == 0 { 1 } else { -1 }),
        None => Err(CalcError::NonIntegralDifference { pair: vn }),
    }
}

/// Supersign of a permutation acting on items with the given parities.
///
/// `perm[k]` is the original index of the item landing in position `k`.
/// Each inversion of two odd items contributes a factor `-1`.
pub fn koszul_sign(perm: &[usize], parities: &[Parity]) -> i8 {
    assert_eq!(perm.len(), parities.len(), "permutation/parity length mismatch");
    let mut sign = 1i8;
    for k in 0..perm.len() {
        for l in (k + 1)..perm.len() {
            if perm[k] > perm[l] && parities[perm[k]].is_odd() && parities[perm[l]].is_odd() {
                sign = -sign;
            }
        }
    }
    sign
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn int_sign_examples() {
        assert_eq!(int_sign(ExpPair::new(Rat::new(1, 2), Rat::new(-1, 2))).unwrap(), -1);
        assert_eq!(int_sign(ExpPair::int(3, 3)).unwrap(), 1);
        assert!(int_sign(ExpPair::new(Rat::new(-1, 3), Rat::new(1, 2))).is_err());
    }

    #[test]
    fn int_sign_multiplicative() {
        let a = ExpPair::new(Rat::new(3, 2), Rat::new(1, 2));
        let b = ExpPair::new(Rat::new(-1, 2), Rat::new(5, 2));
        let lhs = int_sign(a).unwrap() * int_sign(b).unwrap();
        assert_eq!(lhs, int_sign(a + b).unwrap());
    }

    #[test]
    fn coset_equality() {
        let a = ExpPair::new(Rat::new(1, 2), Rat::int(-3));
        let b = ExpPair::new(Rat::new(5, 2), Rat::int(4));
        assert_eq!(a.coset(), b.coset());
        let c = ExpPair::new(Rat::new(1, 3), Rat::int(0));
        assert_ne!(a.coset(), c.coset());
    }

    #[test]
    fn koszul_identity_and_swap() {
        use Parity::*;
        assert_eq!(koszul_sign(&[0, 1, 2], &[Odd, Odd, Odd]), 1);
        assert_eq!(koszul_sign(&[1, 0], &[Odd, Odd]), -1);
        assert_eq!(koszul_sign(&[1, 0], &[Odd, Even]), 1);
    }

    #[test]
    fn koszul_three_cycle() {
        use Parity::*;
        // items (odd, odd, even); permutation placing item 1 first, item 2
        // second, item 0 last moves the two odds past each other once.
        assert_eq!(koszul_sign(&[1, 2, 0], &[Odd, Odd, Even]), -1);
    }

    #[test]
    fn mode_exponent_involution() {
        let e = ExpPair::new(Rat::new(-3, 2), Rat::int(0));
        assert_eq!(e.to_mode().to_exponent(), e);
    }
}
