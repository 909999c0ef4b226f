//! The scalar coefficient field: rational functions in declared scalar
//! symbols over Q(i, sqrt2, sqrt3), kept in reduced monic-denominator
//! form so equality is structural.

use super::poly::{gcd, Poly, ScalarId};
use super::radical::Radical;
use num_rational::BigRational;
use std::collections::HashMap;
use std::fmt;

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Coeff {
    num: Poly,
    den: Poly,
}

impl Coeff {
    fn reduced(num: Poly, den: Poly) -> Coeff {
        assert!(!den.is_zero(), "zero denominator");
        if num.is_zero() {
            return Coeff {
                num: Poly::zero(),
                den: Poly::one(),
            };
        }
        let g = gcd(&num, &den);
        let mut num = num.div_exact(&g).expect("gcd divides numerator");
        let mut den = den.div_exact(&g).expect("gcd divides denominator");
        // Unique representative: monic denominator.
        let lc = den.leading().expect("nonzero").1.clone();
        if !lc.is_one() {
            let inv = lc.inv();
            num = num.scale(&inv);
            den = den.scale(&inv);
        }
        Coeff { num, den }
    }

    pub fn zero() -> Coeff {
        Coeff {
            num: Poly::zero(),
            den: Poly::one(),
        }
    }

    pub fn one() -> Coeff {
        Coeff {
            num: Poly::one(),
            den: Poly::one(),
        }
    }

    pub fn from_int(n: i64) -> Coeff {
        Coeff::from_radical(Radical::from_int(n))
    }

    pub fn from_ratio(n: i64, d: i64) -> Coeff {
        Coeff::from_radical(Radical::from_ratio(n, d))
    }

    pub fn from_radical(r: Radical) -> Coeff {
        Coeff {
            num: Poly::constant(r),
            den: Poly::one(),
        }
    }

    pub fn i() -> Coeff {
        Coeff::from_radical(Radical::i())
    }

    pub fn sqrt2() -> Coeff {
        Coeff::from_radical(Radical::sqrt2())
    }

    pub fn sqrt3() -> Coeff {
        Coeff::from_radical(Radical::sqrt3())
    }

    pub fn scalar(v: ScalarId) -> Coeff {
        Coeff {
            num: Poly::var(v),
            den: Poly::one(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.num.is_one() && self.den.is_one()
    }

    pub fn add(&self, other: &Coeff) -> Coeff {
        let num = self
            .num
            .mul(&other.den)
            .add(&other.num.mul(&self.den));
        let den = self.den.mul(&other.den);
        Coeff::reduced(num, den)
    }

    pub fn neg(&self) -> Coeff {
        Coeff {
            num: self.num.neg(),
            den: self.den.clone(),
        }
    }

    pub fn sub(&self, other: &Coeff) -> Coeff {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Coeff) -> Coeff {
        Coeff::reduced(self.num.mul(&other.num), self.den.mul(&other.den))
    }

    pub fn div(&self, other: &Coeff) -> Coeff {
        assert!(!other.is_zero(), "division by zero coefficient");
        Coeff::reduced(self.num.mul(&other.den), self.den.mul(&other.num))
    }

    pub fn inv(&self) -> Coeff {
        Coeff::one().div(self)
    }

    /// Constant value if the coefficient is free of scalar symbols.
    pub fn as_radical(&self) -> Option<Radical> {
        let n = self.num.as_constant()?;
        let d = self.den.as_constant()?;
        Some(n * d.inv())
    }

    pub fn as_rational(&self) -> Option<BigRational> {
        self.as_radical()?.as_rational().cloned()
    }

    pub fn vars(&self) -> Vec<ScalarId> {
        let mut vs = self.num.vars();
        vs.extend(self.den.vars());
        vs.sort_unstable();
        vs.dedup();
        vs
    }

    /// Substitute scalar symbols by coefficient values (partial maps allowed).
    pub fn subst(&self, map: &HashMap<ScalarId, Coeff>) -> Coeff {
        let num = self.num.subst(map);
        let den = self.den.subst(map);
        num.div(&den)
    }

    /// Evaluate to a field element under a full numeric environment.
    pub fn eval(&self, env: &HashMap<ScalarId, Radical>) -> Result<Radical, EvalError> {
        let n = self.num.eval(env).map_err(EvalError::Unassigned)?;
        let d = self.den.eval(env).map_err(EvalError::Unassigned)?;
        if d.is_zero() {
            return Err(EvalError::ZeroDenominator);
        }
        Ok(n * d.inv())
    }

    pub fn display<'a>(&'a self, names: &'a dyn Fn(ScalarId) -> String) -> CoeffDisplay<'a> {
        CoeffDisplay { coeff: self, names }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EvalError {
    Unassigned(ScalarId),
    ZeroDenominator,
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::Unassigned(v) => write!(f, "unassigned scalar symbol #{v}"),
            EvalError::ZeroDenominator => write!(f, "coefficient denominator evaluates to zero"),
        }
    }
}

pub struct CoeffDisplay<'a> {
    coeff: &'a Coeff,
    names: &'a dyn Fn(ScalarId) -> String,
}

impl fmt::Display for CoeffDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let num = self.coeff.num.display(self.names).to_string();
        if self.coeff.den.is_one() {
            write!(f, "{num}")
        } else {
            let den = self.coeff.den.display(self.names).to_string();
            write!(f, "({num})/({den})")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> Coeff {
        Coeff::scalar(0)
    }

    fn y() -> Coeff {
        Coeff::scalar(1)
    }

    #[test]
    fn p_over_p_is_one() {
        let p = x().mul(&y()).add(&Coeff::from_int(3)).add(&x());
        assert!(p.div(&p).is_one());
    }

    #[test]
    fn field_identities() {
        let p = x().add(&Coeff::from_ratio(1, 2));
        let q = y().sub(&x());
        let r = Coeff::i().mul(&x());
        let lhs = p.mul(&q.add(&r));
        let rhs = p.mul(&q).add(&p.mul(&r));
        assert_eq!(lhs, rhs);
        let sum = p.add(&q).add(&r);
        let sum2 = p.add(&q.add(&r));
        assert_eq!(sum, sum2);
    }

    #[test]
    fn reduction_is_canonical() {
        // (x^2 - y^2)/(x - y) reduces to x + y.
        let num = x().mul(&x()).sub(&y().mul(&y()));
        let den = x().sub(&y());
        let q = num.div(&den);
        assert_eq!(q, x().add(&y()));
    }

    #[test]
    fn substitution() {
        let mut map = HashMap::new();
        map.insert(0, Coeff::from_ratio(1, 3));
        let p = x().mul(&y()).add(&x());
        let s = p.subst(&map);
        let expect = y().mul(&Coeff::from_ratio(1, 3)).add(&Coeff::from_ratio(1, 3));
        assert_eq!(s, expect);
    }

    #[test]
    fn numeric_eval() {
        let mut env = HashMap::new();
        env.insert(0, Radical::from_int(2));
        env.insert(1, Radical::from_int(5));
        let p = x().mul(&y()).sub(&Coeff::from_int(10));
        assert!(p.eval(&env).unwrap().is_zero());
        let q = Coeff::one().div(&x());
        env.insert(0, Radical::zero());
        assert_eq!(q.eval(&env), Err(EvalError::ZeroDenominator));
    }
}
