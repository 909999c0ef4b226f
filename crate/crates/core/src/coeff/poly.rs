//! Multivariate polynomials over Q(i, sqrt2, sqrt3).
//!
//! Variables are scalar symbols identified by interned ids. The
//! representation is a sorted monomial map, so equality is structural
//! once coefficients are normalized. A primitive-PRS multivariate gcd
//! keeps rational functions in reduced form; every polynomial in scope
//! is tiny (products of a few coupling constants), so the classical
//! algorithm is more than fast enough.

use super::radical::Radical;
use std::cmp::Ordering;
use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, HashMap};
use std::fmt;

/// Interned scalar-symbol id (index into the symbol table's scalar list).
pub type ScalarId = u32;

/// A power product of scalar symbols, kept sorted by variable id.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Default)]
pub struct Monomial(Vec<(ScalarId, u32)>);

impl Monomial {
    pub fn unit() -> Self {
        Monomial(Vec::new())
    }

    pub fn var(v: ScalarId) -> Self {
        Monomial(vec![(v, 1)])
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|&(_, e)| e).sum()
    }

    pub fn degree_in(&self, v: ScalarId) -> u32 {
        self.0
            .iter()
            .find(|&&(w, _)| w == v)
            .map(|&(_, e)| e)
            .unwrap_or(0)
    }

    pub fn vars(&self) -> impl Iterator<Item = ScalarId> + '_ {
        self.0.iter().map(|&(v, _)| v)
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut out: Vec<(ScalarId, u32)> = Vec::with_capacity(self.0.len() + other.0.len());
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].0.cmp(&other.0[j].0) {
                Ordering::Less => {
                    out.push(self.0[i]);
                    i += 1;
                }
                Ordering::Greater => {
                    out.push(other.0[j]);
                    j += 1;
                }
                Ordering::Equal => {
                    out.push((self.0[i].0, self.0[i].1 + other.0[j].1));
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&self.0[i..]);
        out.extend_from_slice(&other.0[j..]);
        Monomial(out)
    }

    /// Exact monomial quotient, if `other` divides `self`.
    pub fn div(&self, other: &Monomial) -> Option<Monomial> {
        let mut out = Vec::new();
        let mut map: HashMap<ScalarId, u32> = self.0.iter().copied().collect();
        for &(v, e) in &other.0 {
            let have = map.remove(&v)?;
            if have < e {
                return None;
            }
            if have > e {
                map.insert(v, have - e);
            }
        }
        out.extend(map.into_iter());
        out.sort_unstable();
        Some(Monomial(out))
    }

    fn without(&self, v: ScalarId) -> Monomial {
        Monomial(self.0.iter().copied().filter(|&(w, _)| w != v).collect())
    }
}

/// Graded lexicographic order: total degree first, then exponents
/// compared variable by variable (lower ids rank as bigger variables).
/// Multiplicative, as polynomial division requires.
impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        match self.degree().cmp(&other.degree()) {
            Ordering::Equal => {}
            ord => return ord,
        }
        let (mut i, mut j) = (0, 0);
        loop {
            match (self.0.get(i), other.0.get(j)) {
                (None, None) => return Ordering::Equal,
                (Some(_), None) => return Ordering::Greater,
                (None, Some(_)) => return Ordering::Less,
                (Some(&(va, ea)), Some(&(vb, eb))) => {
                    match va.cmp(&vb) {
                        // Smaller id present only on one side: that side
                        // has positive exponent on a bigger variable.
                        Ordering::Less => return Ordering::Greater,
                        Ordering::Greater => return Ordering::Less,
                        Ordering::Equal => match ea.cmp(&eb) {
                            Ordering::Equal => {
                                i += 1;
                                j += 1;
                            }
                            ord => return ord,
                        },
                    }
                }
            }
        }
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A multivariate polynomial; no zero coefficients are stored.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct Poly {
    terms: BTreeMap<Monomial, Radical>,
}

impl Poly {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn one() -> Self {
        Self::constant(Radical::one())
    }

    pub fn constant(c: Radical) -> Self {
        let mut p = Self::default();
        if !c.is_zero() {
            p.terms.insert(Monomial::unit(), c);
        }
        p
    }

    pub fn var(v: ScalarId) -> Self {
        let mut p = Self::default();
        p.terms.insert(Monomial::var(v), Radical::one());
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_one(&self) -> bool {
        self.terms.len() == 1
            && self
                .terms
                .get(&Monomial::unit())
                .is_some_and(|c| c.is_one())
    }

    /// Constant value if the polynomial has degree zero.
    pub fn as_constant(&self) -> Option<Radical> {
        if self.is_zero() {
            return Some(Radical::zero());
        }
        if self.terms.len() == 1 {
            if let Some(c) = self.terms.get(&Monomial::unit()) {
                return Some(c.clone());
            }
        }
        None
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Radical)> {
        self.terms.iter()
    }

    pub fn add_term(&mut self, m: Monomial, c: Radical) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            Entry::Vacant(e) => {
                e.insert(c);
            }
            Entry::Occupied(mut e) => {
                *e.get_mut() += &c;
                if e.get().is_zero() {
                    e.remove();
                }
            }
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in other.terms.iter() {
            out.add_term(m.clone(), c.clone());
        }
        out
    }

    pub fn neg(&self) -> Poly {
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            *c = -c.clone();
        }
        out
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::zero();
        for (ma, ca) in self.terms.iter() {
            for (mb, cb) in other.terms.iter() {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        out
    }

    pub fn scale(&self, c: &Radical) -> Poly {
        if c.is_zero() {
            return Poly::zero();
        }
        let mut out = self.clone();
        for v in out.terms.values_mut() {
            *v *= c;
        }
        out
    }

    /// Leading (maximal) monomial and coefficient under the graded order.
    pub fn leading(&self) -> Option<(&Monomial, &Radical)> {
        self.terms.iter().next_back()
    }

    /// Total degree in a single variable.
    pub fn degree_in(&self, v: ScalarId) -> u32 {
        self.terms.keys().map(|m| m.degree_in(v)).max().unwrap_or(0)
    }

    pub fn vars(&self) -> Vec<ScalarId> {
        let mut vs: Vec<ScalarId> = self.terms.keys().flat_map(|m| m.vars()).collect();
        vs.sort_unstable();
        vs.dedup();
        vs
    }

    /// Exact division; `None` when the divisor does not divide.
    pub fn div_exact(&self, d: &Poly) -> Option<Poly> {
        assert!(!d.is_zero(), "division by zero polynomial");
        let mut rem = self.clone();
        let mut quot = Poly::zero();
        let (dm, dc) = {
            let (m, c) = d.leading().unwrap();
            (m.clone(), c.clone())
        };
        let dc_inv = dc.inv();
        while !rem.is_zero() {
            let (rm, rc) = {
                let (m, c) = rem.leading().unwrap();
                (m.clone(), c.clone())
            };
            let qm = rm.div(&dm)?;
            let qc = rc * dc_inv.clone();
            let mut t = Poly::zero();
            t.add_term(qm, qc);
            rem = rem.sub(&t.mul(d));
            quot = quot.add(&t);
        }
        Some(quot)
    }

    /// View as univariate in `v`: map from degree to coefficient polynomial.
    fn coeffs_in(&self, v: ScalarId) -> BTreeMap<u32, Poly> {
        let mut out: BTreeMap<u32, Poly> = BTreeMap::new();
        for (m, c) in self.terms.iter() {
            let e = m.degree_in(v);
            out.entry(e)
                .or_default()
                .add_term(m.without(v), c.clone());
        }
        out
    }

    fn from_coeffs_in(v: ScalarId, coeffs: &BTreeMap<u32, Poly>) -> Poly {
        let mut out = Poly::zero();
        for (&e, p) in coeffs {
            let mut xe = Monomial::unit();
            for _ in 0..e {
                xe = xe.mul(&Monomial::var(v));
            }
            for (m, c) in p.terms.iter() {
                out.add_term(m.mul(&xe), c.clone());
            }
        }
        out
    }

    /// Content with respect to `v`: gcd of the univariate coefficients.
    fn content_in(&self, v: ScalarId) -> Poly {
        let mut g = Poly::zero();
        for p in self.coeffs_in(v).values() {
            g = gcd(&g, p);
            if g.is_one() {
                break;
            }
        }
        g
    }

    /// Monic normalization: leading coefficient becomes 1.
    pub fn monic(&self) -> Poly {
        match self.leading() {
            None => Poly::zero(),
            Some((_, c)) => self.scale(&c.inv()),
        }
    }

    /// Substitute variables by rational values; unmapped variables stay symbolic.
    pub fn subst(&self, map: &HashMap<ScalarId, super::ratio::Coeff>) -> super::ratio::Coeff {
        use super::ratio::Coeff;
        let mut acc = Coeff::zero();
        for (m, c) in self.terms.iter() {
            let mut term = Coeff::from_radical(c.clone());
            for v in m.0.iter() {
                let base = match map.get(&v.0) {
                    Some(val) => val.clone(),
                    None => Coeff::scalar(v.0),
                };
                for _ in 0..v.1 {
                    term = term.mul(&base);
                }
            }
            acc = acc.add(&term);
        }
        acc
    }

    /// Evaluate with every variable assigned a field value.
    pub fn eval(&self, env: &HashMap<ScalarId, Radical>) -> Result<Radical, ScalarId> {
        let mut acc = Radical::zero();
        for (m, c) in self.terms.iter() {
            let mut term = c.clone();
            for &(v, e) in m.0.iter() {
                let val = env.get(&v).ok_or(v)?;
                for _ in 0..e {
                    term *= val;
                }
            }
            acc += &term;
        }
        Ok(acc)
    }

    pub fn display<'a>(&'a self, names: &'a dyn Fn(ScalarId) -> String) -> PolyDisplay<'a> {
        PolyDisplay { poly: self, names }
    }
}

/// Pseudo-remainder of `a` by `b`, both viewed in variable `v`.
fn prem(a: &Poly, b: &Poly, v: ScalarId) -> Poly {
    let db = b.degree_in(v);
    let bc = b.coeffs_in(v);
    let blead = bc.get(&db).unwrap().clone();
    let mut r = a.clone();
    while !r.is_zero() && r.degree_in(v) >= db {
        let dr = r.degree_in(v);
        let rc = r.coeffs_in(v);
        let rlead = rc.get(&dr).unwrap().clone();
        // r <- blead*r - rlead * x^(dr-db) * b
        let mut shift = BTreeMap::new();
        shift.insert(dr - db, rlead);
        let shifted = Poly::from_coeffs_in(v, &shift).mul(b);
        r = r.mul(&blead).sub(&shifted);
    }
    r
}

/// Multivariate gcd via primitive PRS, normalized monic.
pub fn gcd(a: &Poly, b: &Poly) -> Poly {
    if a.is_zero() {
        return b.monic();
    }
    if b.is_zero() {
        return a.monic();
    }
    let mut vars = a.vars();
    vars.extend(b.vars());
    vars.sort_unstable();
    vars.dedup();
    let Some(&v) = vars.last() else {
        // Both are nonzero field constants.
        return Poly::one();
    };
    let ca = a.content_in(v);
    let cb = b.content_in(v);
    let cg = gcd(&ca, &cb);
    let mut pa = a.div_exact(&ca).expect("content divides");
    let mut pb = b.div_exact(&cb).expect("content divides");
    if pa.degree_in(v) < pb.degree_in(v) {
        std::mem::swap(&mut pa, &mut pb);
    }
    loop {
        if pb.is_zero() {
            let pp = pa
                .div_exact(&pa.content_in(v))
                .expect("content divides");
            return cg.mul(&pp).monic();
        }
        if pb.degree_in(v) == 0 {
            return cg.monic();
        }
        let r = prem(&pa, &pb, v);
        pa = pb;
        pb = if r.is_zero() {
            Poly::zero()
        } else {
            r.div_exact(&r.content_in(v)).expect("content divides")
        };
    }
}

pub struct PolyDisplay<'a> {
    poly: &'a Poly,
    names: &'a dyn Fn(ScalarId) -> String,
}

impl fmt::Display for PolyDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.poly.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (m, c) in self.poly.terms.iter().rev() {
            let mut factors: Vec<String> = Vec::new();
            let coeff_str = c.to_string();
            let (neg, coeff_str) = match coeff_str.strip_prefix('-') {
                // A leading minus can be pulled out only for single-component values.
                Some(rest) if !rest.contains('+') && !rest.contains('-') => {
                    (true, rest.to_string())
                }
                _ => (false, coeff_str),
            };
            let coeff_is_one = coeff_str == "1";
            if !coeff_is_one || m.0.is_empty() {
                if coeff_str.contains('+') || coeff_str.contains('-') {
                    factors.push(format!("({coeff_str})"));
                } else {
                    factors.push(coeff_str);
                }
            }
            for &(v, e) in m.0.iter() {
                let name = (self.names)(v);
                for _ in 0..e {
                    factors.push(name.clone());
                }
            }
            let body = factors.join("*");
            if first {
                if neg {
                    write!(f, "-{body}")?;
                } else {
                    write!(f, "{body}")?;
                }
                first = false;
            } else if neg {
                write!(f, "-{body}")?;
            } else {
                write!(f, "+{body}")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(n: u32) -> Poly {
        Poly::var(n)
    }

    fn c(n: i64) -> Poly {
        Poly::constant(Radical::from_int(n))
    }

    #[test]
    fn ring_axioms_smoke() {
        let p = v(0).mul(&v(1)).add(&c(3));
        let q = v(1).sub(&c(1));
        let r = v(2).add(&v(0));
        let left = p.add(&q).add(&r);
        let right = p.add(&q.add(&r));
        assert_eq!(left, right);
        let dist = p.mul(&q.add(&r));
        let expanded = p.mul(&q).add(&p.mul(&r));
        assert_eq!(dist, expanded);
    }

    #[test]
    fn exact_division() {
        let p = v(0).add(&v(1));
        let q = v(0).sub(&v(1));
        let prod = p.mul(&q);
        assert_eq!(prod.div_exact(&p).unwrap(), q);
        assert_eq!(prod.div_exact(&q).unwrap(), p);
        assert!(p.div_exact(&q).is_none());
    }

    #[test]
    fn gcd_of_products() {
        let p = v(0).add(&v(1));
        let q = v(0).mul(&v(2)).add(&c(1));
        let a = p.mul(&q);
        let b = p.mul(&v(1).add(&c(2)));
        let g = gcd(&a, &b);
        assert_eq!(g, p.monic());
        // Co-prime inputs.
        let g2 = gcd(&q, &v(1).add(&c(2)));
        assert!(g2.is_one());
    }

    #[test]
    fn gcd_with_radical_coeffs() {
        let p = v(0).scale(&Radical::sqrt2()).add(&c(2));
        let a = p.mul(&p);
        let g = gcd(&a, &p);
        // Monic normalization divides by sqrt2.
        assert_eq!(g, p.monic());
        assert!(a.div_exact(&g).is_some());
    }
}
