//! Covariant differentiation and derivative reordering.
//!
//! A single operator `D` covers both the geometric and the gauge
//! connection: commuting two derivatives on a factor emits one Riemann
//! term per index the factor carries, plus a field-strength term scaled
//! by the factor's charge. The gauge potential itself never appears.

use crate::coeff::Coeff;
use crate::ir::{Expr, Factor, Index, IrError, Role, SymId, SymbolTable, Term, Variance};
use num_traits::Zero;
use std::collections::HashSet;
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum CalcError {
    #[error("derivative index `{0}` already occurs twice in a term")]
    IndexCollision(String),
    #[error("derivative index `{0}` repeats an existing same-variance index")]
    SameVarianceCollision(String),
    #[error("indices `{0}` and `{1}` are not adjacent in the derivative string")]
    NotAdjacent(String, String),
    #[error("no declared symbol plays the {0} role")]
    MissingRole(&'static str),
    #[error("scalar symbol `e` must be declared before charged commutators")]
    MissingChargeUnit,
    #[error("projection index `{0}` is not free in the expression")]
    NotFree(String),
    #[error("projection indices must share one variance")]
    MixedVariance,
    #[error("traceless projection supports two or three indices, got {0}")]
    UnsupportedProjection(usize),
    #[error(transparent)]
    Ir(#[from] IrError),
}

/// Applies `D_idx` to an expression by the Leibniz rule. The metric is
/// covariantly constant, scalar coefficients are constants. An index
/// already free with opposite variance yields a contraction.
pub fn covariant_derivative(
    expr: &Expr,
    idx: &Index,
    table: &SymbolTable,
) -> Result<Expr, CalcError> {
    let mut out = Expr::zero();
    for term in &expr.terms {
        let occurrences: Vec<Variance> = term
            .indices()
            .filter(|i| i.name == idx.name)
            .map(|i| i.variance)
            .collect();
        match occurrences.len() {
            0 => {}
            1 => {
                if occurrences[0] == idx.variance {
                    return Err(CalcError::SameVarianceCollision(idx.name.clone()));
                }
            }
            _ => return Err(CalcError::IndexCollision(idx.name.clone())),
        }
        for k in 0..term.factors.len() {
            if table.tensor(term.factors[k].sym).role == Role::Metric {
                continue;
            }
            let mut factors = term.factors.clone();
            factors[k].derivs.insert(0, idx.clone());
            out.terms.push(Term {
                coeff: term.coeff.clone(),
                factors,
            });
        }
    }
    Ok(out)
}

fn fresh_name(used: &mut HashSet<String>) -> String {
    let mut k = 0usize;
    loop {
        let name = format!("n{k}");
        if !used.contains(&name) {
            used.insert(name.clone());
            return name;
        }
        k += 1;
    }
}

/// The commutator of the two adjacent derivative indices at `pos` and
/// `pos+1` of `factor`, expanded into curvature and field-strength
/// terms, with any outer derivative prefix re-applied by Leibniz.
/// `avoid` lists index names that fresh dummies must not collide with.
fn commutator_at(
    factor: &Factor,
    pos: usize,
    avoid: &HashSet<String>,
    table: &SymbolTable,
) -> Result<Expr, CalcError> {
    let x = factor.derivs[pos].clone();
    let y = factor.derivs[pos + 1].clone();
    let prefix: Vec<Index> = factor.derivs[..pos].to_vec();
    let inner = Factor {
        sym: factor.sym,
        derivs: factor.derivs[pos + 2..].to_vec(),
        slots: factor.slots.clone(),
    };
    let riemann = table
        .role_symbol(Role::Riemann)
        .ok_or(CalcError::MissingRole("riemann"))?;
    let mut used: HashSet<String> = avoid.clone();
    used.extend(factor.indices().map(|i| i.name.clone()));

    let mut out = Expr::zero();
    let positions = inner.derivs.len() + inner.slots.len();
    for p in 0..positions {
        let target = if p < inner.derivs.len() {
            inner.derivs[p].clone()
        } else {
            inner.slots[p - inner.derivs.len()].clone()
        };
        let n = fresh_name(&mut used);
        let (sign, r_slots, replacement) = match target.variance {
            Variance::Lower => (
                Coeff::from_int(-1),
                vec![Index::upper(&n), target.clone(), x.clone(), y.clone()],
                Index::lower(&n),
            ),
            Variance::Upper => (
                Coeff::one(),
                vec![target.clone(), Index::lower(&n), x.clone(), y.clone()],
                Index::upper(&n),
            ),
        };
        let mut inner2 = inner.clone();
        if p < inner2.derivs.len() {
            inner2.derivs[p] = replacement;
        } else {
            let sp = p - inner2.derivs.len();
            inner2.slots[sp] = replacement;
        }
        out.terms.push(Term {
            coeff: sign,
            factors: vec![Factor::new(riemann, r_slots), inner2],
        });
    }

    let charge = &table.tensor(factor.sym).charge;
    if !charge.is_zero() {
        let fs = table
            .role_symbol(Role::FieldStrength)
            .ok_or(CalcError::MissingRole("field strength"))?;
        let e = table
            .scalar_id("e")
            .ok_or(CalcError::MissingChargeUnit)?;
        let coeff = Coeff::i()
            .mul(&Coeff::from_radical(crate::coeff::Radical::from_rational(
                charge.clone(),
            )))
            .mul(&Coeff::scalar(e));
        out.terms.push(Term {
            coeff,
            factors: vec![Factor::new(fs, vec![x.clone(), y.clone()]), inner],
        });
    }

    for d in prefix.iter().rev() {
        out = covariant_derivative(&out, d, table)?;
    }
    Ok(out)
}

/// Expands `[D_c, D_a]` applied around the given factor; the two indices
/// must sit adjacently in its derivative string.
pub fn expand_commutator(
    factor: &Factor,
    c: &Index,
    a: &Index,
    table: &SymbolTable,
) -> Result<Expr, CalcError> {
    let pos = factor
        .derivs
        .windows(2)
        .position(|w| w[0] == *c && w[1] == *a)
        .ok_or_else(|| CalcError::NotAdjacent(c.name.clone(), a.name.clone()))?;
    let avoid: HashSet<String> = factor.indices().map(|i| i.name.clone()).collect();
    commutator_at(factor, pos, &avoid, table)
}

fn deriv_key(idx: &Index) -> (String, Variance) {
    (idx.name.clone(), idx.variance)
}

/// Sorts every derivative string into ascending index order, emitting
/// the commutator expansion for each transposition. The result equals
/// the input modulo the commutation rule.
pub fn normal_order(expr: &Expr, table: &SymbolTable) -> Result<Expr, CalcError> {
    let mut work: Vec<Term> = expr.terms.clone();
    let mut done: Vec<Term> = Vec::new();
    while let Some(term) = work.pop() {
        let mut found = None;
        'scan: for (fi, f) in term.factors.iter().enumerate() {
            for p in 0..f.derivs.len().saturating_sub(1) {
                if deriv_key(&f.derivs[p]) > deriv_key(&f.derivs[p + 1]) {
                    found = Some((fi, p));
                    break 'scan;
                }
            }
        }
        let Some((fi, p)) = found else {
            done.push(term);
            continue;
        };
        let mut swapped = term.clone();
        swapped.factors[fi].derivs.swap(p, p + 1);
        work.push(swapped);
        let avoid: HashSet<String> = term.indices().map(|i| i.name.clone()).collect();
        let corrections = commutator_at(&term.factors[fi], p, &avoid, table)?;
        for ct in corrections.terms {
            let mut factors = term.factors.clone();
            factors.remove(fi);
            factors.extend(ct.factors);
            work.push(Term {
                coeff: term.coeff.mul(&ct.coeff),
                factors,
            });
        }
    }
    Ok(Expr::from_terms(done))
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ProjectMode {
    Symmetrize,
    Antisymmetrize,
    TracelessSymmetrize,
}

fn rename_frees(term: &Term, map: &[(String, Index)]) -> Term {
    let mut t = term.clone();
    for f in t.factors.iter_mut() {
        for idx in f.derivs.iter_mut().chain(f.slots.iter_mut()) {
            if let Some((_, to)) = map.iter().find(|(from, _)| *from == idx.name) {
                *idx = to.clone();
            }
        }
    }
    t
}

fn apply_renaming(expr: &Expr, map: &[(String, Index)]) -> Expr {
    Expr::from_terms(expr.terms.iter().map(|t| rename_frees(t, map)).collect())
}

fn perm_parity(perm: &[usize]) -> i8 {
    let mut p = perm.to_vec();
    let mut sign = 1i8;
    for i in 0..p.len() {
        while p[i] != i {
            let j = p[i];
            p.swap(i, j);
            sign = -sign;
        }
    }
    sign
}

/// Index projections: averaged (anti)symmetrization over the listed free
/// indices, or the unaveraged traceless-symmetric combination used by
/// first-order wave systems (rank two: `X_ab + X_ba - (2/d) g_ab tr`;
/// rank three: the cyclic sum with its metric-trace completion).
pub fn project(
    expr: &Expr,
    mode: ProjectMode,
    indices: &[Index],
    table: &SymbolTable,
) -> Result<Expr, CalcError> {
    let frees = expr.free_indices();
    for idx in indices {
        if !frees.contains(idx) {
            return Err(CalcError::NotFree(idx.name.clone()));
        }
    }
    let n = indices.len();
    match mode {
        ProjectMode::Symmetrize | ProjectMode::Antisymmetrize => {
            use itertools::Itertools;
            let mut out = Expr::zero();
            let mut count = 0i64;
            for perm in (0..n).permutations(n) {
                count += 1;
                let map: Vec<(String, Index)> = (0..n)
                    .map(|k| (indices[k].name.clone(), indices[perm[k]].clone()))
                    .collect();
                let mut image = apply_renaming(expr, &map);
                if mode == ProjectMode::Antisymmetrize && perm_parity(&perm) < 0 {
                    image = image.scale(&Coeff::from_int(-1));
                }
                out = out.add(&image);
            }
            Ok(out.scale(&Coeff::from_ratio(1, count)))
        }
        ProjectMode::TracelessSymmetrize => {
            if indices
                .iter()
                .any(|i| i.variance != indices[0].variance)
            {
                return Err(CalcError::MixedVariance);
            }
            let d = table.dimension as i64;
            let used: Vec<String> = expr
                .terms
                .iter()
                .flat_map(|t| t.index_names())
                .collect();
            let mut used: HashSet<String> = used.into_iter().collect();
            let m = fresh_name(&mut used);
            match n {
                2 => {
                    let (a, b) = (&indices[0], &indices[1]);
                    let sym = apply_renaming(
                        expr,
                        &[(a.name.clone(), a.clone()), (b.name.clone(), b.clone())],
                    )
                    .add(&apply_renaming(
                        expr,
                        &[(a.name.clone(), b.clone()), (b.name.clone(), a.clone())],
                    ));
                    let tr = apply_renaming(
                        expr,
                        &[
                            (a.name.clone(), Index::upper(&m)),
                            (b.name.clone(), Index::lower(&m)),
                        ],
                    );
                    let g = Factor::new(crate::ir::METRIC, vec![a.clone(), b.clone()]);
                    let trace_terms: Vec<Term> = tr
                        .terms
                        .iter()
                        .map(|t| {
                            let mut factors = vec![g.clone()];
                            factors.extend(t.factors.clone());
                            Term {
                                coeff: t.coeff.mul(&Coeff::from_ratio(-2, d)),
                                factors,
                            }
                        })
                        .collect();
                    Ok(sym.add(&Expr::from_terms(trace_terms)))
                }
                3 => {
                    let (a, b, c) = (&indices[0], &indices[1], &indices[2]);
                    let images = [(a, b, c), (b, c, a), (c, a, b)];
                    let mut out = Expr::zero();
                    for (x, y, z) in images {
                        let map = vec![
                            (a.name.clone(), x.clone()),
                            (b.name.clone(), y.clone()),
                            (c.name.clone(), z.clone()),
                        ];
                        out = out.add(&apply_renaming(expr, &map));
                        // Trace completion g_{x z} * X(m^, m_, y): the two
                        // leading listed indices contract, the middle one
                        // takes the surviving label.
                        let tr = apply_renaming(
                            expr,
                            &[
                                (a.name.clone(), Index::upper(&m)),
                                (b.name.clone(), Index::lower(&m)),
                                (c.name.clone(), y.clone()),
                            ],
                        );
                        let g = Factor::new(crate::ir::METRIC, vec![x.clone(), z.clone()]);
                        let trace_terms: Vec<Term> = tr
                            .terms
                            .iter()
                            .map(|t| {
                                let mut factors = vec![g.clone()];
                                factors.extend(t.factors.clone());
                                Term {
                                    coeff: t.coeff.mul(&Coeff::from_ratio(-2, d + 2)),
                                    factors,
                                }
                            })
                            .collect();
                        out = out.add(&Expr::from_terms(trace_terms));
                    }
                    Ok(out)
                }
                k => Err(CalcError::UnsupportedProjection(k)),
            }
        }
    }
}

/// Rewrites internally contracted curvature factors into the declared
/// Ricci symbol using the contraction `ricci[a b] = g^{x y} riemann[x a y b]`.
pub const RICCI_CONVENTION: &str = "ricci[a b] = inverse_metric[x y] * riemann[x a y b]";

pub fn ricci_rewrite(expr: &Expr, table: &SymbolTable) -> Result<Expr, CalcError> {
    let riemann = table
        .role_symbol(Role::Riemann)
        .ok_or(CalcError::MissingRole("riemann"))?;
    let ricci = table
        .role_symbol(Role::Ricci)
        .ok_or(CalcError::MissingRole("ricci"))?;
    let group = table.tensor(riemann).group.clone();
    let mut out = Expr::zero();
    for term in &expr.terms {
        let mut term = term.clone();
        'rewrite: loop {
            for (fi, f) in term.factors.iter().enumerate() {
                if f.sym != riemann {
                    continue;
                }
                let internal = (0..4)
                    .flat_map(|i| ((i + 1)..4).map(move |j| (i, j)))
                    .find(|&(i, j)| f.slots[i].name == f.slots[j].name);
                let Some((i, j)) = internal else {
                    continue;
                };
                for elem in &group {
                    let slots = elem.apply(&f.slots);
                    if slots[0].name == slots[2].name {
                        let replacement = Factor {
                            sym: ricci,
                            derivs: f.derivs.clone(),
                            slots: vec![slots[1].clone(), slots[3].clone()],
                        };
                        if elem.sign < 0 {
                            term.coeff = term.coeff.neg();
                        }
                        term.factors[fi] = replacement;
                        continue 'rewrite;
                    }
                }
                // Pair confined to an antisymmetric block: the term is
                // zero after canonicalization; leave it untouched.
                let _ = (i, j);
            }
            break;
        }
        out.terms.push(term);
    }
    Ok(out)
}

/// Drops every term containing one of the given symbols; used for
/// flat-neutral degeneration (curvature and field strength set to zero).
pub fn zero_symbols(expr: &Expr, syms: &[SymId]) -> Expr {
    Expr::from_terms(
        expr.terms
            .iter()
            .filter(|t| !t.factors.iter().any(|f| syms.contains(&f.sym)))
            .cloned()
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canon::{canonical_eq, is_zero};
    use crate::ir::{SignedPerm, METRIC};
    use num_rational::BigRational;
    use num_traits::One;

    fn table() -> SymbolTable {
        let mut t = SymbolTable::with_geometry(4);
        t.declare_tensor(
            "Phi",
            0,
            vec![],
            vec![],
            BigRational::one(),
            Role::None,
        )
        .unwrap();
        t.declare_tensor("U", 0, vec![], vec![], BigRational::zero(), Role::None)
            .unwrap();
        t.declare_tensor("A", 2, vec![], vec![], BigRational::zero(), Role::None)
            .unwrap();
        t.declare_tensor(
            "W",
            2,
            vec![SignedPerm {
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

    fn single(t: Term) -> Expr {
        Expr::from_terms(vec![t])
    }

    #[test]
    fn metric_derivative_vanishes() {
        let t = table();
        let g = single(Term {
            coeff: Coeff::one(),
            factors: vec![Factor::new(
                METRIC,
                vec![Index::lower("b"), Index::lower("c")],
            )],
        });
        let d = covariant_derivative(&g, &Index::lower("a"), &t).unwrap();
        assert!(d.is_zero_literal());
    }

    #[test]
    fn leibniz_on_products() {
        let t = table();
        let a = t.tensor_id("A").unwrap();
        let prod = single(Term {
            coeff: Coeff::one(),
            factors: vec![
                Factor::new(a, vec![Index::lower("b"), Index::lower("c")]),
                Factor::new(a, vec![Index::lower("m"), Index::lower("k")]),
            ],
        });
        let d = covariant_derivative(&prod, &Index::lower("a"), &t).unwrap();
        assert_eq!(d.terms.len(), 2);
        assert_eq!(d.terms[0].factors[0].derivs.len(), 1);
        assert_eq!(d.terms[1].factors[1].derivs.len(), 1);
    }

    #[test]
    fn charged_scalar_commutator_is_gauge_term() {
        let t = table();
        let phi = t.tensor_id("Phi").unwrap();
        let f = Factor {
            sym: phi,
            derivs: vec![Index::lower("c"), Index::lower("a")],
            slots: vec![],
        };
        let got = expand_commutator(&f, &Index::lower("c"), &Index::lower("a"), &t).unwrap();
        // i e F_{c a} Phi
        let fs = t.tensor_id("F").unwrap();
        let e = t.scalar_id("e").unwrap();
        let want = single(Term {
            coeff: Coeff::i().mul(&Coeff::scalar(e)),
            factors: vec![
                Factor::new(fs, vec![Index::lower("c"), Index::lower("a")]),
                Factor::new(phi, vec![]),
            ],
        });
        assert!(canonical_eq(&got, &want, &t).unwrap());
    }

    #[test]
    fn neutral_rank2_commutator_matches_rule() {
        let t = table();
        let a = t.tensor_id("A").unwrap();
        let r = t.tensor_id("R").unwrap();
        let f = Factor {
            sym: a,
            derivs: vec![Index::lower("c"), Index::lower("a")],
            slots: vec![Index::lower("b"), Index::lower("k")],
        };
        let got = expand_commutator(&f, &Index::lower("c"), &Index::lower("a"), &t).unwrap();
        // -A_{n k} R^{n}_{b c a} - A_{b n} R^{n}_{k c a}
        let mk = |sub: [&str; 2], rsub: &str| Term {
            coeff: Coeff::from_int(-1),
            factors: vec![
                Factor::new(a, vec![Index::lower(sub[0]), Index::lower(sub[1])]),
                Factor::new(
                    r,
                    vec![
                        Index::upper("n"),
                        Index::lower(rsub),
                        Index::lower("c"),
                        Index::lower("a"),
                    ],
                ),
            ],
        };
        let want = Expr::from_terms(vec![mk(["n", "k"], "b"), mk(["b", "n"], "k")]);
        assert!(canonical_eq(&got, &want, &t).unwrap());
    }

    #[test]
    fn symmetric_part_has_no_curvature() {
        let t = table();
        let u = t.tensor_id("U").unwrap();
        let mk = |first: &str, second: &str| {
            single(Term {
                coeff: Coeff::one(),
                factors: vec![Factor {
                    sym: u,
                    derivs: vec![Index::lower(first), Index::lower(second)],
                    slots: vec![],
                }],
            })
        };
        let sym = mk("a", "b").add(&mk("b", "a"));
        let no = normal_order(&sym, &t).unwrap();
        let target = mk("a", "b").scale(&Coeff::from_int(2));
        assert!(canonical_eq(&no, &target, &t).unwrap());
    }

    #[test]
    fn project_examples() {
        let t = table();
        let fsym = t.tensor_id("F").unwrap();
        let f_ab = single(Term {
            coeff: Coeff::one(),
            factors: vec![Factor::new(
                fsym,
                vec![Index::lower("a"), Index::lower("b")],
            )],
        });
        let anti = project(
            &f_ab,
            ProjectMode::Antisymmetrize,
            &[Index::lower("a"), Index::lower("b")],
            &t,
        )
        .unwrap();
        assert!(canonical_eq(&anti, &f_ab, &t).unwrap());
        let sym = project(
            &f_ab,
            ProjectMode::Symmetrize,
            &[Index::lower("a"), Index::lower("b")],
            &t,
        )
        .unwrap();
        assert!(is_zero(&sym, &t).unwrap());
    }

    #[test]
    fn contracted_commutator_gives_riemann_and_ricci() {
        // (D^c D_a - D_a D^c) W_{b c} = R_{c a b n} W^{c n} + Ric_{a c} W^{c}_{b}
        let t = table();
        let w = t.tensor_id("W").unwrap();
        let r = t.tensor_id("R").unwrap();
        let ric = t.tensor_id("Ric").unwrap();
        let mk = |derivs: Vec<Index>| {
            single(Term {
                coeff: Coeff::one(),
                factors: vec![Factor {
                    sym: w,
                    derivs,
                    slots: vec![Index::lower("b"), Index::lower("c")],
                }],
            })
        };
        let lhs = mk(vec![Index::upper("c"), Index::lower("a")])
            .sub(&mk(vec![Index::lower("a"), Index::upper("c")]));
        let no = normal_order(&lhs, &t).unwrap();
        let rewritten = ricci_rewrite(&no, &t).unwrap();
        let rhs = Expr::from_terms(vec![
            Term {
                coeff: Coeff::one(),
                factors: vec![
                    Factor::new(
                        r,
                        vec![
                            Index::lower("c"),
                            Index::lower("a"),
                            Index::lower("b"),
                            Index::lower("n"),
                        ],
                    ),
                    Factor::new(w, vec![Index::upper("c"), Index::upper("n")]),
                ],
            },
            Term {
                coeff: Coeff::one(),
                factors: vec![
                    Factor::new(ric, vec![Index::lower("a"), Index::lower("c")]),
                    Factor::new(w, vec![Index::upper("c"), Index::lower("b")]),
                ],
            },
        ]);
        assert!(canonical_eq(&rewritten, &rhs, &t).unwrap());
    }

    #[test]
    fn traceless_symmetrize_is_traceless() {
        let t = table();
        let a = t.tensor_id("A").unwrap();
        let x = single(Term {
            coeff: Coeff::one(),
            factors: vec![Factor::new(a, vec![Index::lower("a"), Index::lower("b")])],
        });
        let p = project(
            &x,
            ProjectMode::TracelessSymmetrize,
            &[Index::lower("a"), Index::lower("b")],
            &t,
        )
        .unwrap();
        assert_eq!(p.terms.len(), 3);
        // Contract with g^{ab}: must vanish.
        let mut traced = Expr::zero();
        for term in &p.terms {
            let mut factors = vec![Factor::new(
                METRIC,
                vec![Index::upper("a"), Index::upper("b")],
            )];
            factors.extend(term.factors.clone());
            traced.terms.push(Term {
                coeff: term.coeff.clone(),
                factors,
            });
        }
        assert!(is_zero(&traced, &t).unwrap());
    }
}
