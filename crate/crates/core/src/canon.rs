//! Canonical forms for indexed expressions.
//!
//! Equality of expressions modulo declared slot symmetries, metric
//! contraction, dummy-index relabeling, and traceless declarations is
//! decided by bringing every term to a unique representative: the
//! minimal "index word" over the product of the per-factor symmetry
//! groups, all factor orderings, and all dummy-pair orientation flips.
//! Every tensor in scope has rank at most four and terms carry few
//! factors, so exhaustive search over that product is cheap; a
//! double-coset algorithm is not needed.

use crate::coeff::Coeff;
use crate::ir::{
    validate, Expr, Factor, Index, IrError, SymId, SymbolTable, Term, Variance, METRIC,
};
use itertools::Itertools;
use std::collections::HashMap;
use thiserror::Error;

/// An expression in canonical form.
#[derive(Clone, PartialEq, Debug)]
pub struct CanonicalExpr {
    expr: Expr,
}

impl CanonicalExpr {
    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn into_expr(self) -> Expr {
        self.expr
    }

    pub fn is_zero(&self) -> bool {
        self.expr.terms.is_empty()
    }
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum CanonError {
    #[error(transparent)]
    Ir(#[from] IrError),
    #[error("term carries {0} indices, brute-force limit is {1}")]
    SizeLimit(usize, usize),
}

/// Index key inside a term word: free indices compare by their rank in
/// the sorted free-name list, dummies by first-occurrence ordinal.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
enum Key {
    Free(u32, Variance),
    Dummy(u32, Variance),
}

type FactorWord = (u32, SymId, Vec<Key>, Vec<Key>);
type Word = Vec<FactorWord>;

struct TermShape {
    /// Factors after metric absorption.
    factors: Vec<Factor>,
    /// Sorted free names of the term.
    free_names: Vec<String>,
    /// Dummy names of the term.
    dummy_names: Vec<String>,
}

fn occurrence_counts(factors: &[Factor]) -> HashMap<String, usize> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for f in factors {
        for idx in f.indices() {
            *counts.entry(idx.name.clone()).or_insert(0) += 1;
        }
    }
    counts
}

/// Absorbs metric factors: raising/lowering through contraction,
/// a fully self-contracted metric contributing a dimension factor,
/// and a derived metric vanishing outright.
fn absorb_metric(
    mut factors: Vec<Factor>,
    coeff: &mut Coeff,
    table: &SymbolTable,
) -> Option<Vec<Factor>> {
    'outer: loop {
        let counts = occurrence_counts(&factors);
        for i in 0..factors.len() {
            if factors[i].sym != METRIC {
                continue;
            }
            if !factors[i].derivs.is_empty() {
                // Covariant constancy: any derivative of the metric vanishes.
                return None;
            }
            let (s0, s1) = (factors[i].slots[0].clone(), factors[i].slots[1].clone());
            if s0.name == s1.name {
                *coeff = coeff.mul(&Coeff::from_int(table.dimension as i64));
                factors.remove(i);
                continue 'outer;
            }
            for (this, other) in [(s0.clone(), s1.clone()), (s1, s0)] {
                if counts.get(&this.name).copied().unwrap_or(0) == 2 {
                    // Replace the partner occurrence with the other slot.
                    let mut done = false;
                    for (j, f) in factors.iter_mut().enumerate() {
                        if j == i {
                            continue;
                        }
                        for idx in f.derivs.iter_mut().chain(f.slots.iter_mut()) {
                            if idx.name == this.name {
                                *idx = other.clone();
                                done = true;
                                break;
                            }
                        }
                        if done {
                            break;
                        }
                    }
                    if done {
                        factors.remove(i);
                        continue 'outer;
                    }
                }
            }
        }
        return Some(factors);
    }
}

fn shape_of(factors: Vec<Factor>) -> TermShape {
    let counts = occurrence_counts(&factors);
    let mut free_names: Vec<String> = counts
        .iter()
        .filter(|&(_, &c)| c == 1)
        .map(|(n, _)| n.clone())
        .collect();
    free_names.sort();
    let mut dummy_names: Vec<String> = counts
        .iter()
        .filter(|&(_, &c)| c == 2)
        .map(|(n, _)| n.clone())
        .collect();
    dummy_names.sort();
    TermShape {
        factors,
        free_names,
        dummy_names,
    }
}

/// Builds the comparable word of one arrangement, assigning dummy
/// ordinals by first occurrence.
fn build_word(
    order: &[usize],
    arranged_slots: &[Vec<Index>],
    factors: &[Factor],
    flip_mask: u64,
    shape: &TermShape,
    name_ranks: &[u32],
) -> Word {
    let free_rank: HashMap<&str, u32> = shape
        .free_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i as u32))
        .collect();
    let dummy_pos: HashMap<&str, usize> = shape
        .dummy_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let mut ordinals: HashMap<String, u32> = HashMap::new();
    let mut word: Word = Vec::with_capacity(order.len());
    for &fi in order {
        let f = &factors[fi];
        let mut enc = |idx: &Index, out: &mut Vec<Key>| {
            let mut variance = idx.variance;
            if let Some(&dp) = dummy_pos.get(idx.name.as_str()) {
                if flip_mask & (1 << dp) != 0 {
                    variance = variance.flip();
                }
                let next = ordinals.len() as u32;
                let ord = *ordinals.entry(idx.name.clone()).or_insert(next);
                out.push(Key::Dummy(ord, variance));
            } else {
                out.push(Key::Free(free_rank[idx.name.as_str()], variance));
            }
        };
        let mut derivs = Vec::with_capacity(f.derivs.len());
        for idx in &f.derivs {
            enc(idx, &mut derivs);
        }
        let mut slots = Vec::with_capacity(f.slots.len());
        for idx in &arranged_slots[fi] {
            enc(idx, &mut slots);
        }
        word.push((name_ranks[f.sym as usize], f.sym, derivs, slots));
    }
    word
}

/// Canonical form of a single term: `None` when the term vanishes by
/// symmetry or traceless declarations.
fn canon_term(term: &Term, table: &SymbolTable, name_ranks: &[u32]) -> Option<Term> {
    if term.coeff.is_zero() {
        return None;
    }
    let mut coeff = term.coeff.clone();
    let factors = absorb_metric(term.factors.clone(), &mut coeff, table)?;
    for f in &factors {
        let decl = table.tensor(f.sym);
        for &(a, b) in &decl.traceless_pairs {
            if f.slots[a].name == f.slots[b].name {
                return None;
            }
        }
    }
    if factors.is_empty() {
        return Some(Term {
            coeff,
            factors,
        });
    }
    let shape = shape_of(factors);
    let n = shape.factors.len();
    let groups: Vec<&[crate::ir::SignedPerm]> = shape
        .factors
        .iter()
        .map(|f| table.tensor(f.sym).group.as_slice())
        .collect();

    let mut best: Option<(Word, i8)> = None;
    let mut vanishes = false;
    let flip_count = 1u64 << shape.dummy_names.len();

    for order in (0..n).permutations(n) {
        // Odometer over the product of per-factor symmetry groups.
        let mut counters = vec![0usize; n];
        loop {
            let mut sign = 1i8;
            let mut arranged: Vec<Vec<Index>> = Vec::with_capacity(n);
            for (fi, &ci) in counters.iter().enumerate() {
                let elem = &groups[fi][ci];
                sign *= elem.sign;
                arranged.push(elem.apply(&shape.factors[fi].slots));
            }
            for flip_mask in 0..flip_count {
                let word = build_word(
                    &order,
                    &arranged,
                    &shape.factors,
                    flip_mask,
                    &shape,
                    name_ranks,
                );
                match &best {
                    None => best = Some((word, sign)),
                    Some((bw, bs)) => match word.cmp(bw) {
                        std::cmp::Ordering::Less => best = Some((word, sign)),
                        std::cmp::Ordering::Equal => {
                            if sign != *bs {
                                vanishes = true;
                            }
                        }
                        std::cmp::Ordering::Greater => {}
                    },
                }
            }
            if vanishes {
                return None;
            }
            // Advance the odometer.
            let mut k = 0;
            loop {
                if k == n {
                    break;
                }
                counters[k] += 1;
                if counters[k] < groups[k].len() {
                    break;
                }
                counters[k] = 0;
                k += 1;
            }
            if k == n {
                break;
            }
        }
    }

    let (word, sign) = best.expect("nonempty factor list");
    if sign < 0 {
        coeff = coeff.neg();
    }
    Some(rebuild(word, &shape, coeff))
}

/// Letters available for canonical dummy names, in the order tried.
fn dummy_pool(free_names: &[String], needed: usize) -> Vec<String> {
    let mut pool = Vec::with_capacity(needed);
    for c in b'a'..=b'z' {
        let name = (c as char).to_string();
        if !free_names.contains(&name) {
            pool.push(name);
        }
        if pool.len() == needed {
            return pool;
        }
    }
    let mut k = 0;
    while pool.len() < needed {
        let name = format!("d{k}");
        if !free_names.contains(&name) {
            pool.push(name);
        }
        k += 1;
    }
    pool
}

fn rebuild(word: Word, shape: &TermShape, coeff: Coeff) -> Term {
    let ndummy = shape.dummy_names.len();
    let pool = dummy_pool(&shape.free_names, ndummy);
    let decode = |k: &Key| -> Index {
        match k {
            Key::Free(r, v) => Index {
                name: shape.free_names[*r as usize].clone(),
                variance: *v,
            },
            Key::Dummy(o, v) => Index {
                name: pool[*o as usize].clone(),
                variance: *v,
            },
        }
    };
    let factors = word
        .into_iter()
        .map(|(_, sym, derivs, slots)| Factor {
            sym,
            derivs: derivs.iter().map(&decode).collect(),
            slots: slots.iter().map(&decode).collect(),
        })
        .collect();
    Term { coeff, factors }
}

/// Deterministic sort key for merged canonical terms.
fn term_key(t: &Term) -> String {
    let mut s = String::new();
    for f in &t.factors {
        s.push_str(&format!("{:04}", f.sym));
        s.push_str(&format!("{:02}", f.derivs.len()));
        for i in f.indices() {
            s.push_str(&i.to_string());
            s.push(' ');
        }
        s.push('|');
    }
    s
}

/// Brings an expression to canonical form: per-term minimization, like
/// term collection, zero-coefficient removal, deterministic ordering.
pub fn canonicalize(expr: &Expr, table: &SymbolTable) -> Result<CanonicalExpr, CanonError> {
    validate(expr, table)?;
    let name_ranks = table.name_ranks();
    let mut merged: HashMap<Vec<Factor>, Coeff> = HashMap::new();
    let mut order: Vec<Vec<Factor>> = Vec::new();
    for term in &expr.terms {
        let Some(c) = canon_term(term, table, &name_ranks) else {
            continue;
        };
        match merged.get_mut(&c.factors) {
            Some(acc) => *acc = acc.add(&c.coeff),
            None => {
                merged.insert(c.factors.clone(), c.coeff);
                order.push(c.factors);
            }
        }
    }
    let mut terms: Vec<Term> = order
        .into_iter()
        .filter_map(|factors| {
            let coeff = merged.remove(&factors).unwrap();
            if coeff.is_zero() {
                None
            } else {
                Some(Term { coeff, factors })
            }
        })
        .collect();
    terms.sort_by_key(term_key);
    Ok(CanonicalExpr {
        expr: Expr { terms },
    })
}

/// True when the canonical form is the empty sum.
pub fn is_zero(expr: &Expr, table: &SymbolTable) -> Result<bool, CanonError> {
    Ok(canonicalize(expr, table)?.is_zero())
}

/// Canonical equality of two expressions.
pub fn canonical_eq(a: &Expr, b: &Expr, table: &SymbolTable) -> Result<bool, CanonError> {
    is_zero(&a.sub(b), table)
}

const BRUTE_LIMIT: usize = 8;

/// Independent equivalence oracle: exhaustive enumeration of symmetry
/// group elements, factor orders, dummy orientation flips, and dummy
/// renamings, with no canonical-form machinery involved.
pub fn brute_equiv(a: &Term, b: &Term, table: &SymbolTable) -> Result<bool, CanonError> {
    for t in [a, b] {
        let n = t.indices().count();
        if n > BRUTE_LIMIT {
            return Err(CanonError::SizeLimit(n, BRUTE_LIMIT));
        }
    }
    let zero_a = brute_is_zero(a, table);
    let zero_b = brute_is_zero(b, table);
    if zero_a || zero_b {
        return Ok(zero_a && zero_b);
    }
    Ok(brute_match(a, b, table))
}

fn enumerate_variants(t: &Term, table: &SymbolTable) -> Vec<(Vec<Factor>, i8)> {
    // Callers track absorbed dimension factors through their own
    // absorb_metric pass; only the factor lists matter here.
    let mut coeff = Coeff::one();
    let Some(factors) = absorb_metric(t.factors.clone(), &mut coeff, table) else {
        return Vec::new();
    };
    let shape = shape_of(factors);
    let n = shape.factors.len();
    let groups: Vec<&[crate::ir::SignedPerm]> = shape
        .factors
        .iter()
        .map(|f| table.tensor(f.sym).group.as_slice())
        .collect();
    let flip_count = 1u64 << shape.dummy_names.len();
    let mut out = Vec::new();
    for order in (0..n).permutations(n) {
        let mut counters = vec![0usize; n];
        loop {
            let mut sign = 1i8;
            let mut arranged: Vec<Factor> = Vec::with_capacity(n);
            for &fi in &order {
                let elem = &groups[fi][counters[fi]];
                arranged.push(Factor {
                    sym: shape.factors[fi].sym,
                    derivs: shape.factors[fi].derivs.clone(),
                    slots: elem.apply(&shape.factors[fi].slots),
                });
            }
            for (fi, &ci) in counters.iter().enumerate() {
                sign *= groups[fi][ci].sign;
            }
            for flip_mask in 0..flip_count {
                let mut flipped = arranged.clone();
                for f in flipped.iter_mut() {
                    for idx in f.derivs.iter_mut().chain(f.slots.iter_mut()) {
                        if let Some(dp) = shape.dummy_names.iter().position(|d| d == &idx.name) {
                            if flip_mask & (1 << dp) != 0 {
                                idx.variance = idx.variance.flip();
                            }
                        }
                    }
                }
                out.push((flipped, sign));
            }
            let mut k = 0;
            loop {
                if k == n {
                    break;
                }
                counters[k] += 1;
                if counters[k] < groups[k].len() {
                    break;
                }
                counters[k] = 0;
                k += 1;
            }
            if k == n {
                break;
            }
        }
    }
    out
}

fn rename_dummies(factors: &[Factor], map: &HashMap<&str, &str>) -> Vec<Factor> {
    factors
        .iter()
        .map(|f| Factor {
            sym: f.sym,
            derivs: f
                .derivs
                .iter()
                .map(|i| Index {
                    name: map.get(i.name.as_str()).map_or(i.name.clone(), |n| n.to_string()),
                    variance: i.variance,
                })
                .collect(),
            slots: f
                .slots
                .iter()
                .map(|i| Index {
                    name: map.get(i.name.as_str()).map_or(i.name.clone(), |n| n.to_string()),
                    variance: i.variance,
                })
                .collect(),
        })
        .collect()
}

fn brute_is_zero(t: &Term, table: &SymbolTable) -> bool {
    if t.coeff.is_zero() {
        return true;
    }
    let mut base_coeff = Coeff::one();
    let Some(base) = absorb_metric(t.factors.clone(), &mut base_coeff, table) else {
        return true;
    };
    let shape = shape_of(base.clone());
    let dummies: Vec<&str> = shape.dummy_names.iter().map(|s| s.as_str()).collect();
    for (variant, sign) in enumerate_variants(t, table) {
        if sign == 1 {
            continue;
        }
        for perm in dummies.iter().copied().permutations(dummies.len()) {
            let map: HashMap<&str, &str> = dummies.iter().copied().zip(perm).collect();
            if rename_dummies(&variant, &map) == base {
                return true;
            }
        }
    }
    false
}

fn brute_match(a: &Term, b: &Term, table: &SymbolTable) -> bool {
    let mut ca = a.coeff.clone();
    let Some(_) = absorb_metric(a.factors.clone(), &mut ca, table) else {
        return false;
    };
    let mut cb = b.coeff.clone();
    let Some(fb) = absorb_metric(b.factors.clone(), &mut cb, table) else {
        return false;
    };
    let shape_b = shape_of(fb.clone());
    let targets: Vec<&str> = shape_b.dummy_names.iter().map(|s| s.as_str()).collect();
    for (variant, sign) in enumerate_variants(a, table) {
        let shape_v = shape_of(variant.clone());
        if shape_v.dummy_names.len() != targets.len() {
            continue;
        }
        let sources: Vec<&str> = shape_v.dummy_names.iter().map(|s| s.as_str()).collect();
        let scaled = if sign < 0 { ca.neg() } else { ca.clone() };
        if scaled != cb {
            continue;
        }
        if targets.is_empty() {
            if variant == fb {
                return true;
            }
            continue;
        }
        for perm in targets.iter().copied().permutations(targets.len()) {
            let map: HashMap<&str, &str> = sources.iter().copied().zip(perm).collect();
            if rename_dummies(&variant, &map) == fb {
                return true;
            }
        }
    }
    false
}

/// Opt-in multiterm rewrite using declared vanishing cyclic sums (the
/// first Bianchi identity when declared on the curvature symbol): any
/// term whose canonical form is the strictly greatest of its three
/// cyclic images is replaced by minus the sum of the other two.
pub fn cyclic_rewrite(expr: &Expr, table: &SymbolTable) -> Result<CanonicalExpr, CanonError> {
    let mut current = canonicalize(expr, table)?.into_expr();
    for _ in 0..24 {
        let mut changed = false;
        let mut next = Expr::zero();
        'term: for term in &current.terms {
            for (fi, f) in term.factors.iter().enumerate() {
                let decl = table.tensor(f.sym);
                let Some(tri) = decl.cyclic_zero else {
                    continue;
                };
                let v1 = cycled_term(term, fi, tri);
                let v2 = cycled_term(&v1, fi, tri);
                let k0 = canon_key(term, table)?;
                let k1 = canon_key(&v1, table)?;
                let k2 = canon_key(&v2, table)?;
                let k0s = k0.as_deref();
                if k0s > k1.as_deref() && k0s > k2.as_deref() && k0.is_some() {
                    let minus = Coeff::from_int(-1);
                    next.terms.push(Term {
                        coeff: v1.coeff.mul(&minus),
                        factors: v1.factors.clone(),
                    });
                    next.terms.push(Term {
                        coeff: v2.coeff.mul(&minus),
                        factors: v2.factors.clone(),
                    });
                    changed = true;
                    continue 'term;
                }
            }
            next.terms.push(term.clone());
        }
        current = canonicalize(&next, table)?.into_expr();
        if !changed {
            break;
        }
    }
    Ok(CanonicalExpr { expr: current })
}

fn cycled_term(term: &Term, fi: usize, tri: [usize; 3]) -> Term {
    let mut t = term.clone();
    let f = &mut t.factors[fi];
    let old = f.slots.clone();
    f.slots[tri[0]] = old[tri[1]].clone();
    f.slots[tri[1]] = old[tri[2]].clone();
    f.slots[tri[2]] = old[tri[0]].clone();
    t
}

fn canon_key(term: &Term, table: &SymbolTable) -> Result<Option<String>, CanonError> {
    let ranks = table.name_ranks();
    Ok(canon_term(term, table, &ranks).map(|t| term_key(&t)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::Role;
    use num_rational::BigRational;
    use num_traits::Zero;

    fn table() -> SymbolTable {
        let mut t = SymbolTable::with_geometry(4);
        t.declare_tensor("A", 1, vec![], vec![], BigRational::zero(), Role::None)
            .unwrap();
        t.declare_tensor("B", 1, vec![], vec![], BigRational::zero(), Role::None)
            .unwrap();
        t.declare_tensor(
            "S",
            2,
            vec![crate::ir::SignedPerm {
                perm: vec![1, 0],
                sign: 1,
            }],
            vec![(0, 1)],
            BigRational::zero(),
            Role::None,
        )
        .unwrap();
        t
    }

    fn one_term(t: &SymbolTable, sym: &str, slots: Vec<Index>) -> Expr {
        Expr::from_terms(vec![Term {
            coeff: Coeff::one(),
            factors: vec![Factor::new(t.tensor_id(sym).unwrap(), slots)],
        }])
    }

    #[test]
    fn antisymmetry_cancels() {
        let t = table();
        let e = one_term(&t, "F", vec![Index::lower("a"), Index::lower("b")]).add(&one_term(
            &t,
            "F",
            vec![Index::lower("b"), Index::lower("a")],
        ));
        assert!(is_zero(&e, &t).unwrap());
        let d = one_term(&t, "F", vec![Index::lower("a"), Index::lower("b")]).sub(&one_term(
            &t,
            "F",
            vec![Index::lower("b"), Index::lower("a")],
        ));
        assert!(!is_zero(&d, &t).unwrap());
    }

    #[test]
    fn riemann_pair_swap() {
        let t = table();
        let e = one_term(
            &t,
            "R",
            vec![
                Index::lower("a"),
                Index::lower("b"),
                Index::lower("c"),
                Index::lower("d"),
            ],
        )
        .sub(&one_term(
            &t,
            "R",
            vec![
                Index::lower("c"),
                Index::lower("d"),
                Index::lower("a"),
                Index::lower("b"),
            ],
        ));
        assert!(is_zero(&e, &t).unwrap());
    }

    #[test]
    fn dummy_relabeling() {
        let t = table();
        let a = t.tensor_id("A").unwrap();
        let b = t.tensor_id("B").unwrap();
        let mk = |d: &str| {
            Expr::from_terms(vec![Term {
                coeff: Coeff::one(),
                factors: vec![
                    Factor::new(a, vec![Index::upper(d)]),
                    Factor::new(b, vec![Index::lower(d)]),
                ],
            }])
        };
        assert!(canonical_eq(&mk("m"), &mk("c"), &t).unwrap());
    }

    #[test]
    fn traceless_trace_vanishes() {
        let t = table();
        // g^{ac} S_(ac) -> 0 for a declared traceless symmetric symbol.
        let g = Expr::from_terms(vec![Term {
            coeff: Coeff::one(),
            factors: vec![
                Factor::new(METRIC, vec![Index::upper("a"), Index::upper("c")]),
                Factor::new(
                    t.tensor_id("S").unwrap(),
                    vec![Index::lower("a"), Index::lower("c")],
                ),
            ],
        }]);
        assert!(is_zero(&g, &t).unwrap());
    }

    #[test]
    fn metric_self_contraction_gives_dimension() {
        let t = table();
        let e = Expr::from_terms(vec![Term {
            coeff: Coeff::one(),
            factors: vec![
                Factor::new(METRIC, vec![Index::upper("a"), Index::upper("b")]),
                Factor::new(METRIC, vec![Index::lower("a"), Index::lower("b")]),
            ],
        }]);
        let c = canonicalize(&e, &t).unwrap();
        assert_eq!(c.expr().terms.len(), 1);
        assert!(c.expr().terms[0].factors.is_empty());
        assert_eq!(c.expr().terms[0].coeff, Coeff::from_int(4));
    }

    #[test]
    fn antisymmetric_self_trace_vanishes() {
        let t = table();
        let e = one_term(&t, "F", vec![Index::upper("a"), Index::lower("a")]);
        assert!(is_zero(&e, &t).unwrap());
    }

    #[test]
    fn idempotent_on_samples() {
        let t = table();
        let e = one_term(
            &t,
            "R",
            vec![
                Index::lower("b"),
                Index::lower("a"),
                Index::upper("m"),
                Index::lower("m"),
            ],
        );
        let c1 = canonicalize(&e, &t).unwrap();
        let c2 = canonicalize(c1.expr(), &t).unwrap();
        assert_eq!(c1, c2);
    }

    #[test]
    fn brute_agrees_on_simple_cases() {
        let t = table();
        let f = t.tensor_id("F").unwrap();
        let ba = Term {
            coeff: Coeff::one(),
            factors: vec![Factor::new(f, vec![Index::lower("b"), Index::lower("a")])],
        };
        let minus_ab = Term {
            coeff: Coeff::from_int(-1),
            factors: vec![Factor::new(f, vec![Index::lower("a"), Index::lower("b")])],
        };
        assert!(brute_equiv(&ba, &minus_ab, &t).unwrap());
        let plus_ab = Term {
            coeff: Coeff::one(),
            factors: vec![Factor::new(f, vec![Index::lower("a"), Index::lower("b")])],
        };
        assert!(!brute_equiv(&ba, &plus_ab, &t).unwrap());
    }

    #[test]
    fn cyclic_rewrite_kills_bianchi_sum() {
        let mut t = SymbolTable::new(4);
        t.declare_tensor_full(
            "R",
            4,
            vec![
                crate::ir::SignedPerm {
                    perm: vec![1, 0, 2, 3],
                    sign: -1,
                },
                crate::ir::SignedPerm {
                    perm: vec![0, 1, 3, 2],
                    sign: -1,
                },
                crate::ir::SignedPerm {
                    perm: vec![2, 3, 0, 1],
                    sign: 1,
                },
            ],
            vec![],
            Some([1, 2, 3]),
            BigRational::zero(),
            Role::Riemann,
        )
        .unwrap();
        let r = t.tensor_id("R").unwrap();
        let mk = |i: [&str; 4]| Term {
            coeff: Coeff::one(),
            factors: vec![Factor::new(
                r,
                i.iter().map(|n| Index::lower(n)).collect(),
            )],
        };
        let e = Expr::from_terms(vec![
            mk(["a", "b", "c", "d"]),
            mk(["a", "c", "d", "b"]),
            mk(["a", "d", "b", "c"]),
        ]);
        assert!(!is_zero(&e, &t).unwrap());
        let rewritten = cyclic_rewrite(&e, &t).unwrap();
        assert!(rewritten.is_zero());
    }
}
