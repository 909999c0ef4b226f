//! Exact arithmetic in the number field Q(i, sqrt2, sqrt3).
//!
//! Elements are stored on the 8-dimensional Q-basis
//! `1, i, sqrt2, i*sqrt2, sqrt3, i*sqrt3, sqrt6, i*sqrt6`,
//! indexed by the bit pattern `i | sqrt2 << 1 | sqrt3 << 2`.
//! Multiplication reduces with `i^2 = -1`, `sqrt2^2 = 2`, `sqrt3^2 = 3`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use std::fmt;
use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};

const I_BIT: usize = 1;
const S2_BIT: usize = 2;
const S3_BIT: usize = 4;

/// An element of Q(i, sqrt2, sqrt3).
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Radical {
    comps: [BigRational; 8],
}

impl Radical {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn one() -> Self {
        Self::from_int(1)
    }

    pub fn from_int(n: i64) -> Self {
        Self::from_rational(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn from_ratio(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        Self::from_rational(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn from_rational(q: BigRational) -> Self {
        let mut r = Self::default();
        r.comps[0] = q;
        r
    }

    /// The imaginary unit.
    pub fn i() -> Self {
        Self::basis(I_BIT)
    }

    pub fn sqrt2() -> Self {
        Self::basis(S2_BIT)
    }

    pub fn sqrt3() -> Self {
        Self::basis(S3_BIT)
    }

    fn basis(b: usize) -> Self {
        let mut r = Self::default();
        r.comps[b] = BigRational::one();
        r
    }

    pub fn is_zero(&self) -> bool {
        self.comps.iter().all(|c| c.is_zero())
    }

    pub fn is_one(&self) -> bool {
        self.comps[0].is_one() && self.comps[1..].iter().all(|c| c.is_zero())
    }

    /// Returns the rational part if the element lies in Q.
    pub fn as_rational(&self) -> Option<&BigRational> {
        if self.comps[1..].iter().all(|c| c.is_zero()) {
            Some(&self.comps[0])
        } else {
            None
        }
    }

    fn conj(&self, bit: usize) -> Self {
        let mut r = self.clone();
        for (b, c) in r.comps.iter_mut().enumerate() {
            if b & bit != 0 {
                *c = -c.clone();
            }
        }
        r
    }

    /// Multiplicative inverse. Panics on zero.
    pub fn inv(&self) -> Self {
        assert!(!self.is_zero(), "inverse of zero");
        // Norm down the tower: first over i, then sqrt3, then sqrt2.
        let ci = self.conj(I_BIT);
        let n1 = self.clone() * ci.clone();
        let c3 = n1.conj(S3_BIT);
        let n2 = n1 * c3.clone();
        let c2 = n2.conj(S2_BIT);
        let n3 = n2 * c2.clone();
        let norm = n3
            .as_rational()
            .expect("full norm must be rational")
            .clone();
        assert!(!norm.is_zero(), "zero norm for nonzero element");
        let mut out = ci * c3 * c2;
        let inv_norm = norm.recip();
        for c in out.comps.iter_mut() {
            *c *= &inv_norm;
        }
        out
    }

    /// True when every basis component is a non-negative rational and
    /// the element is "purely negative" printing-wise; used only to pick
    /// a leading sign when rendering.
    pub fn is_negative_rational(&self) -> bool {
        matches!(self.as_rational(), Some(q) if q.is_negative())
    }
}

impl Add for Radical {
    type Output = Radical;
    fn add(mut self, rhs: Radical) -> Radical {
        self += &rhs;
        self
    }
}

impl AddAssign<&Radical> for Radical {
    fn add_assign(&mut self, rhs: &Radical) {
        for (a, b) in self.comps.iter_mut().zip(rhs.comps.iter()) {
            *a += b;
        }
    }
}

impl Sub for Radical {
    type Output = Radical;
    fn sub(mut self, rhs: Radical) -> Radical {
        self -= &rhs;
        self
    }
}

impl SubAssign<&Radical> for Radical {
    fn sub_assign(&mut self, rhs: &Radical) {
        for (a, b) in self.comps.iter_mut().zip(rhs.comps.iter()) {
            *a -= b;
        }
    }
}

impl Neg for Radical {
    type Output = Radical;
    fn neg(mut self) -> Radical {
        for c in self.comps.iter_mut() {
            *c = -c.clone();
        }
        self
    }
}

impl Mul for Radical {
    type Output = Radical;
    fn mul(self, rhs: Radical) -> Radical {
        &self * &rhs
    }
}

impl Mul for &Radical {
    type Output = Radical;
    fn mul(self, rhs: &Radical) -> Radical {
        let mut out = Radical::default();
        for (ba, ca) in self.comps.iter().enumerate() {
            if ca.is_zero() {
                continue;
            }
            for (bb, cb) in rhs.comps.iter().enumerate() {
                if cb.is_zero() {
                    continue;
                }
                let mut q = ca * cb;
                // Squared generators reduce to rational factors.
                if ba & bb & I_BIT != 0 {
                    q = -q;
                }
                if ba & bb & S2_BIT != 0 {
                    q *= BigRational::from_integer(BigInt::from(2));
                }
                if ba & bb & S3_BIT != 0 {
                    q *= BigRational::from_integer(BigInt::from(3));
                }
                out.comps[ba ^ bb] += q;
            }
        }
        out
    }
}

impl MulAssign<&Radical> for Radical {
    fn mul_assign(&mut self, rhs: &Radical) {
        *self = &*self * rhs;
    }
}

fn fmt_rational(q: &BigRational) -> String {
    if q.denom().is_one() {
        format!("{}", q.numer())
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

impl fmt::Display for Radical {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut parts = Vec::new();
        for (b, c) in self.comps.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let mut factors = Vec::new();
            let abs = c.abs();
            if !abs.is_one() || b == 0 {
                factors.push(fmt_rational(&abs));
            }
            if b & I_BIT != 0 {
                factors.push("i".into());
            }
            if b & S2_BIT != 0 {
                factors.push("sqrt2".into());
            }
            if b & S3_BIT != 0 {
                factors.push("sqrt3".into());
            }
            let body = factors.join("*");
            if parts.is_empty() {
                if c.is_negative() {
                    parts.push(format!("-{body}"));
                } else {
                    parts.push(body);
                }
            } else if c.is_negative() {
                parts.push(format!("-{body}"));
            } else {
                parts.push(format!("+{body}"));
            }
        }
        write!(f, "{}", parts.join(""))
    }
}

impl fmt::Debug for Radical {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adjoined_radicals_reduce() {
        let s6 = Radical::sqrt2() * Radical::sqrt3();
        assert_eq!(s6.clone() * s6, Radical::from_int(6));
        let i2 = Radical::i() * Radical::i();
        assert_eq!(i2.clone() * i2, Radical::one());
        assert_eq!(Radical::i() * Radical::i(), -Radical::one());
    }

    #[test]
    fn inverse_roundtrip() {
        let z = Radical::from_ratio(3, 7) + Radical::i() * Radical::from_int(2)
            - Radical::sqrt2() * Radical::from_ratio(1, 4)
            + Radical::sqrt3() * Radical::i() * Radical::from_int(5);
        let w = z.clone() * z.inv();
        assert!(w.is_one());
        let one_over_i = Radical::i().inv();
        assert_eq!(one_over_i, -Radical::i());
    }

    #[test]
    fn display_is_compact() {
        let z = -Radical::from_ratio(1, 2) * Radical::i();
        assert_eq!(z.to_string(), "-1/2*i");
        assert_eq!(Radical::sqrt2().to_string(), "sqrt2");
    }
}
