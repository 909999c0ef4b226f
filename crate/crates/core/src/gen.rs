//! Pseudorandom term and expression generators for property tests and
//! the acceptance suite. Deterministic per seed.

use crate::coeff::Coeff;
use crate::ir::{Expr, Factor, Index, SymId, SymbolTable, Term, Variance, METRIC};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const LETTERS: [&str; 12] = ["a", "b", "c", "d", "k", "m", "n", "p", "r", "s", "t", "x"];

/// Limits for generated terms.
#[derive(Clone, Copy, Debug)]
pub struct GenLimits {
    pub max_factors: usize,
    pub max_indices: usize,
    pub max_derivs: usize,
}

impl Default for GenLimits {
    fn default() -> Self {
        GenLimits {
            max_factors: 3,
            max_indices: 6,
            max_derivs: 2,
        }
    }
}

fn random_coeff(rng: &mut ChaCha8Rng) -> Coeff {
    let num: i64 = rng.random_range(-5..=5);
    let den: i64 = rng.random_range(1..=4);
    let mut c = Coeff::from_ratio(if num == 0 { 1 } else { num }, den);
    if rng.random_bool(0.25) {
        c = c.mul(&Coeff::i());
    }
    if rng.random_bool(0.15) {
        c = c.mul(&Coeff::sqrt2());
    }
    c
}

/// Draws a random valid term over the given symbol pool: a factor
/// multiset is chosen first, then slot and derivative positions are
/// paired into dummies or filled with the required free indices.
///
/// `required_frees`: every generated term exposes exactly these free
/// indices (pass `None` to let the generator choose).
pub fn random_term(
    rng: &mut ChaCha8Rng,
    table: &SymbolTable,
    pool: &[SymId],
    required_frees: Option<&[Index]>,
    limits: GenLimits,
) -> Term {
    'retry: loop {
        let nfactors = rng.random_range(1..=limits.max_factors);
        let mut factors: Vec<(SymId, usize, usize)> = Vec::new(); // (sym, rank, nderivs)
        let mut total = 0usize;
        for _ in 0..nfactors {
            let sym = pool[rng.random_range(0..pool.len())];
            let rank = table.tensor(sym).rank;
            let nderivs = if limits.max_derivs == 0 {
                0
            } else {
                // Derivatives only on matter fields, mirroring real use.
                match table.tensor(sym).role {
                    crate::ir::Role::None => rng.random_range(0..=limits.max_derivs),
                    _ => 0,
                }
            };
            total += rank + nderivs;
            factors.push((sym, rank, nderivs));
        }
        if total > limits.max_indices {
            continue 'retry;
        }
        let frees: Vec<Index> = match required_frees {
            Some(f) => f.to_vec(),
            None => {
                let nfree = if total == 0 {
                    0
                } else {
                    let max_free = total.min(3);
                    let mut n = rng.random_range(0..=max_free);
                    if (total - n) % 2 != 0 {
                        if n + 1 <= total && n + 1 <= max_free {
                            n += 1;
                        } else if n > 0 {
                            n -= 1;
                        }
                    }
                    n
                };
                (0..nfree)
                    .map(|k| Index {
                        name: LETTERS[k].to_string(),
                        variance: if rng.random_bool(0.5) {
                            Variance::Upper
                        } else {
                            Variance::Lower
                        },
                    })
                    .collect()
            }
        };
        if frees.len() > total || (total - frees.len()) % 2 != 0 {
            continue 'retry;
        }
        // Fill a flat position list: frees first, then dummy pairs.
        let ndummy = (total - frees.len()) / 2;
        let mut slots: Vec<Index> = Vec::with_capacity(total);
        for f in &frees {
            slots.push(f.clone());
        }
        for k in 0..ndummy {
            let name = LETTERS[frees.len() + k + ndummy.min(4)].to_string();
            let name = format!("{name}{k}");
            let up = rng.random_bool(0.5);
            slots.push(Index {
                name: name.clone(),
                variance: if up { Variance::Upper } else { Variance::Lower },
            });
            slots.push(Index {
                name,
                variance: if up { Variance::Lower } else { Variance::Upper },
            });
        }
        // Shuffle positions.
        for i in (1..slots.len()).rev() {
            let j = rng.random_range(0..=i);
            slots.swap(i, j);
        }
        let mut it = slots.into_iter();
        let built: Vec<Factor> = factors
            .iter()
            .map(|&(sym, rank, nderivs)| Factor {
                sym,
                derivs: (0..nderivs).map(|_| it.next().unwrap()).collect(),
                slots: (0..rank).map(|_| it.next().unwrap()).collect(),
            })
            .collect();
        let term = Term {
            coeff: random_coeff(rng),
            factors: built,
        };
        if crate::ir::validate_term(&term, table).is_ok() {
            return term;
        }
    }
}

/// A random expression: several terms sharing one free-index set.
pub fn random_expr(
    rng: &mut ChaCha8Rng,
    table: &SymbolTable,
    pool: &[SymId],
    limits: GenLimits,
) -> Expr {
    let first = random_term(rng, table, pool, None, limits);
    let frees = first.free_indices();
    let extra = rng.random_range(0..3);
    let mut terms = vec![first];
    for _ in 0..extra {
        terms.push(random_term(rng, table, pool, Some(&frees), limits));
    }
    Expr::from_terms(terms)
}

/// A standard table for generator-based tests: geometry plus a few
/// matter fields of every shape the engine handles.
pub fn test_table() -> (SymbolTable, Vec<SymId>) {
    let mut t = SymbolTable::with_geometry(4);
    crate::parse::parse_declarations(
        "tensor S0 rank=0\n\
         tensor Sc rank=0 charge=e\n\
         tensor V rank=1\n\
         tensor Vc rank=1 charge=e\n\
         tensor T2 rank=2\n\
         tensor Sym2 rank=2 sym=(+(2 1)) traceless=((1 2)) charge=e\n\
         tensor Anti2 rank=2 sym=(-(2 1))\n\
         tensor Hook rank=3 sym=(-(1 3 2))\n",
        &mut t,
    )
    .expect("test declarations");
    let mut pool: Vec<SymId> = ["S0", "Sc", "V", "Vc", "T2", "Sym2", "Anti2", "Hook", "R", "F"]
        .iter()
        .map(|n| t.tensor_id(n).unwrap())
        .collect();
    pool.push(METRIC);
    (t, pool)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;

    #[test]
    fn generated_terms_validate() {
        let (t, pool) = test_table();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..200 {
            let term = random_term(&mut rng, &t, &pool, None, GenLimits::default());
            assert!(crate::ir::validate_term(&term, &t).is_ok());
            assert!(term.indices().count() <= 6);
        }
    }

    #[test]
    fn generated_exprs_validate() {
        let (t, pool) = test_table();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let e = random_expr(&mut rng, &t, &pool, GenLimits::default());
            assert!(crate::ir::validate(&e, &t).is_ok());
        }
    }
}
