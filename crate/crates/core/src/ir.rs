//! Expression representation: abstract indices, declared tensor symbols,
//! factors with covariant-derivative strings, and sums of terms.
//!
//! All values are immutable after construction. The symbol table is
//! append-only; once the declaration phase is over it is only read.

use crate::coeff::{Coeff, ScalarId};
use num_rational::BigRational;
use num_traits::Zero;
use std::collections::HashMap;
use std::fmt;
use thiserror::Error;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Variance {
    Upper,
    Lower,
}

impl Variance {
    pub fn flip(self) -> Variance {
        match self {
            Variance::Upper => Variance::Lower,
            Variance::Lower => Variance::Upper,
        }
    }
}

/// An abstract index: a short name plus a variance.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Index {
    pub name: String,
    pub variance: Variance,
}

impl Index {
    pub fn upper(name: &str) -> Index {
        Index {
            name: name.to_string(),
            variance: Variance::Upper,
        }
    }

    pub fn lower(name: &str) -> Index {
        Index {
            name: name.to_string(),
            variance: Variance::Lower,
        }
    }

    pub fn flipped(&self) -> Index {
        Index {
            name: self.name.clone(),
            variance: self.variance.flip(),
        }
    }
}

impl fmt::Display for Index {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.variance {
            Variance::Upper => write!(f, "^{}", self.name),
            Variance::Lower => write!(f, "_{}", self.name),
        }
    }
}

/// A slot permutation together with a sign, in one-line image notation:
/// `perm[k]` is where slot `k` is sent.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct SignedPerm {
    pub perm: Vec<u8>,
    pub sign: i8,
}

impl SignedPerm {
    pub fn identity(rank: usize) -> SignedPerm {
        SignedPerm {
            perm: (0..rank as u8).collect(),
            sign: 1,
        }
    }

    pub fn compose(&self, other: &SignedPerm) -> SignedPerm {
        // (self ∘ other): apply other first.
        let perm = other.perm.iter().map(|&k| self.perm[k as usize]).collect();
        SignedPerm {
            perm,
            sign: self.sign * other.sign,
        }
    }

    pub fn is_valid(&self, rank: usize) -> bool {
        if self.perm.len() != rank || (self.sign != 1 && self.sign != -1) {
            return false;
        }
        let mut seen = vec![false; rank];
        for &p in &self.perm {
            if (p as usize) >= rank || seen[p as usize] {
                return false;
            }
            seen[p as usize] = true;
        }
        true
    }

    /// Apply to a slot list: result[perm[k]] = slots[k].
    pub fn apply<T: Clone>(&self, slots: &[T]) -> Vec<T> {
        let mut out: Vec<T> = slots.to_vec();
        for (k, item) in slots.iter().enumerate() {
            out[self.perm[k] as usize] = item.clone();
        }
        out
    }
}

/// Special roles a declared symbol can play in the calculus.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Role {
    None,
    Metric,
    Riemann,
    Ricci,
    FieldStrength,
}

/// Numeric id of a declared tensor symbol.
pub type SymId = u32;

#[derive(Clone, Debug)]
pub struct TensorSymbol {
    pub name: String,
    pub rank: usize,
    pub symmetries: Vec<SignedPerm>,
    /// Full signed-permutation group generated by `symmetries` (with identity).
    pub group: Vec<SignedPerm>,
    /// Slot pairs (0-based) whose metric trace is declared to vanish.
    pub traceless_pairs: Vec<(usize, usize)>,
    /// Optional slot triple over which the cyclic sum is declared to vanish.
    pub cyclic_zero: Option<[usize; 3]>,
    /// Electric charge as a rational multiple of the coupling `e`.
    pub charge: BigRational,
    pub role: Role,
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum IrError {
    #[error("symbol `{0}` is already declared")]
    DuplicateName(String),
    #[error("malformed symmetry generator for `{0}`: not a signed permutation of the slots")]
    BadGenerator(String),
    #[error("traceless pair out of range or not distinct for `{0}`")]
    BadTracelessPair(String),
    #[error("cyclic triple out of range or not distinct for `{0}`")]
    BadCyclicTriple(String),
    #[error("unknown tensor symbol `{0}`")]
    UnknownSymbol(String),
    #[error("unknown scalar symbol `{0}`")]
    UnknownScalar(String),
    #[error("index `{0}` appears more than twice in a term")]
    IndexTriple(String),
    #[error("index `{0}` repeats with the same variance in a term")]
    SameVarianceRepeat(String),
    #[error("free indices differ between terms: {0} vs {1}")]
    FreeIndexMismatch(String, String),
    #[error("factor of `{0}` carries {1} slot indices, declared rank is {2}")]
    ArityMismatch(String, usize, usize),
    #[error("symmetry group for `{0}` exceeds the supported size")]
    GroupTooLarge(String),
}

/// Append-only registry of tensor and scalar symbols plus the ambient
/// dimension used by metric contraction.
#[derive(Clone, Debug)]
pub struct SymbolTable {
    tensors: Vec<TensorSymbol>,
    by_name: HashMap<String, SymId>,
    scalars: Vec<String>,
    scalars_by_name: HashMap<String, ScalarId>,
    pub dimension: u32,
}

pub const METRIC: SymId = 0;

impl SymbolTable {
    /// A fresh table containing only the metric.
    pub fn new(dimension: u32) -> SymbolTable {
        assert!(dimension >= 2, "dimension must be at least 2");
        let mut t = SymbolTable {
            tensors: Vec::new(),
            by_name: HashMap::new(),
            scalars: Vec::new(),
            scalars_by_name: HashMap::new(),
            dimension,
        };
        t.declare_tensor(
            "g",
            2,
            vec![SignedPerm {
                perm: vec![1, 0],
                sign: 1,
            }],
            vec![],
            BigRational::zero(),
            Role::Metric,
        )
        .expect("metric declaration");
        t
    }

    /// A table pre-populated with the standard geometry symbols
    /// (Riemann, Ricci, field strength) and common scalar names.
    pub fn with_geometry(dimension: u32) -> SymbolTable {
        let mut t = SymbolTable::new(dimension);
        t.declare_tensor(
            "R",
            4,
            vec![
                SignedPerm {
                    perm: vec![1, 0, 2, 3],
                    sign: -1,
                },
                SignedPerm {
                    perm: vec![0, 1, 3, 2],
                    sign: -1,
                },
                SignedPerm {
                    perm: vec![2, 3, 0, 1],
                    sign: 1,
                },
            ],
            vec![],
            BigRational::zero(),
            Role::Riemann,
        )
        .unwrap();
        let sym2 = vec![SignedPerm {
            perm: vec![1, 0],
            sign: 1,
        }];
        t.declare_tensor("Ric", 2, sym2, vec![], BigRational::zero(), Role::Ricci)
            .unwrap();
        t.declare_tensor(
            "F",
            2,
            vec![SignedPerm {
                perm: vec![1, 0],
                sign: -1,
            }],
            vec![],
            BigRational::zero(),
            Role::FieldStrength,
        )
        .unwrap();
        for s in ["M", "e", "mu"] {
            t.declare_scalar(s).unwrap();
        }
        t
    }

    pub fn declare_tensor(
        &mut self,
        name: &str,
        rank: usize,
        symmetries: Vec<SignedPerm>,
        traceless_pairs: Vec<(usize, usize)>,
        charge: BigRational,
        role: Role,
    ) -> Result<SymId, IrError> {
        self.declare_tensor_full(name, rank, symmetries, traceless_pairs, None, charge, role)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn declare_tensor_full(
        &mut self,
        name: &str,
        rank: usize,
        symmetries: Vec<SignedPerm>,
        traceless_pairs: Vec<(usize, usize)>,
        cyclic_zero: Option<[usize; 3]>,
        charge: BigRational,
        role: Role,
    ) -> Result<SymId, IrError> {
        if self.by_name.contains_key(name) || self.scalars_by_name.contains_key(name) {
            return Err(IrError::DuplicateName(name.to_string()));
        }
        for g in &symmetries {
            if !g.is_valid(rank) {
                return Err(IrError::BadGenerator(name.to_string()));
            }
        }
        for &(a, b) in &traceless_pairs {
            if a >= rank || b >= rank || a == b {
                return Err(IrError::BadTracelessPair(name.to_string()));
            }
        }
        if let Some(t) = &cyclic_zero {
            if t.iter().any(|&s| s >= rank) || t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(IrError::BadCyclicTriple(name.to_string()));
            }
        }
        let group = close_group(rank, &symmetries)
            .ok_or_else(|| IrError::GroupTooLarge(name.to_string()))?;
        let id = self.tensors.len() as SymId;
        self.tensors.push(TensorSymbol {
            name: name.to_string(),
            rank,
            symmetries,
            group,
            traceless_pairs,
            cyclic_zero,
            charge,
            role,
        });
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn declare_scalar(&mut self, name: &str) -> Result<ScalarId, IrError> {
        if self.by_name.contains_key(name) || self.scalars_by_name.contains_key(name) {
            return Err(IrError::DuplicateName(name.to_string()));
        }
        let id = self.scalars.len() as ScalarId;
        self.scalars.push(name.to_string());
        self.scalars_by_name.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn tensor(&self, id: SymId) -> &TensorSymbol {
        &self.tensors[id as usize]
    }

    pub fn tensor_id(&self, name: &str) -> Option<SymId> {
        self.by_name.get(name).copied()
    }

    pub fn scalar_id(&self, name: &str) -> Option<ScalarId> {
        self.scalars_by_name.get(name).copied()
    }

    pub fn scalar_name(&self, id: ScalarId) -> &str {
        &self.scalars[id as usize]
    }

    pub fn scalars(&self) -> impl Iterator<Item = (ScalarId, &str)> {
        self.scalars
            .iter()
            .enumerate()
            .map(|(i, n)| (i as ScalarId, n.as_str()))
    }

    pub fn tensors(&self) -> impl Iterator<Item = (SymId, &TensorSymbol)> {
        self.tensors
            .iter()
            .enumerate()
            .map(|(i, t)| (i as SymId, t))
    }

    pub fn role_symbol(&self, role: Role) -> Option<SymId> {
        self.tensors
            .iter()
            .position(|t| t.role == role)
            .map(|i| i as SymId)
    }

    /// Rank of a symbol name in alphabetical order, for deterministic
    /// term ordering that follows names rather than declaration order.
    /// The metric always sorts first so it prints as a prefactor.
    pub fn name_ranks(&self) -> Vec<u32> {
        let mut names: Vec<(usize, &str)> = self
            .tensors
            .iter()
            .enumerate()
            .filter(|(_, t)| t.role != Role::Metric)
            .map(|(i, t)| (i, t.name.as_str()))
            .collect();
        names.sort_by_key(|&(_, n)| n);
        let mut ranks = vec![0u32; self.tensors.len()];
        for (rank, &(id, _)) in names.iter().enumerate() {
            ranks[id] = rank as u32 + 1;
        }
        ranks
    }
}

fn close_group(rank: usize, generators: &[SignedPerm]) -> Option<Vec<SignedPerm>> {
    const LIMIT: usize = 768;
    let mut group = vec![SignedPerm::identity(rank)];
    let mut frontier = group.clone();
    while let Some(elem) = frontier.pop() {
        for g in generators {
            let next = g.compose(&elem);
            // A permutation appearing with both signs makes every slot
            // arrangement cancel; keep both so the canonicalizer sees it.
            if !group.contains(&next) {
                if group.len() >= LIMIT {
                    return None;
                }
                group.push(next.clone());
                frontier.push(next);
            }
        }
    }
    Some(group)
}

/// One multiplicative factor: a symbol, an optional string of covariant
/// derivative indices (outermost first), and its slot indices.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Factor {
    pub sym: SymId,
    pub derivs: Vec<Index>,
    pub slots: Vec<Index>,
}

impl Factor {
    pub fn new(sym: SymId, slots: Vec<Index>) -> Factor {
        Factor {
            sym,
            derivs: Vec::new(),
            slots,
        }
    }

    pub fn indices(&self) -> impl Iterator<Item = &Index> {
        self.derivs.iter().chain(self.slots.iter())
    }
}

/// A scalar coefficient times a product of factors.
#[derive(Clone, PartialEq, Debug)]
pub struct Term {
    pub coeff: Coeff,
    pub factors: Vec<Factor>,
}

impl Term {
    pub fn scalar(coeff: Coeff) -> Term {
        Term {
            coeff,
            factors: Vec::new(),
        }
    }

    pub fn indices(&self) -> impl Iterator<Item = &Index> {
        self.factors.iter().flat_map(|f| f.indices())
    }

    /// Names used anywhere in the term.
    pub fn index_names(&self) -> Vec<String> {
        let mut v: Vec<String> = self.indices().map(|i| i.name.clone()).collect();
        v.sort();
        v.dedup();
        v
    }

    /// Free indices (appearing exactly once), sorted by name.
    pub fn free_indices(&self) -> Vec<Index> {
        let mut count: HashMap<&str, Vec<&Index>> = HashMap::new();
        for idx in self.indices() {
            count.entry(idx.name.as_str()).or_default().push(idx);
        }
        let mut frees: Vec<Index> = count
            .into_values()
            .filter(|v| v.len() == 1)
            .map(|v| v[0].clone())
            .collect();
        frees.sort();
        frees
    }
}

/// A finite sum of terms; the empty sum is zero.
#[derive(Clone, PartialEq, Debug, Default)]
pub struct Expr {
    pub terms: Vec<Term>,
}

impl Expr {
    pub fn zero() -> Expr {
        Expr::default()
    }

    pub fn from_terms(terms: Vec<Term>) -> Expr {
        Expr { terms }
    }

    pub fn is_zero_literal(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn scale(&self, c: &Coeff) -> Expr {
        Expr {
            terms: self
                .terms
                .iter()
                .map(|t| Term {
                    coeff: t.coeff.mul(c),
                    factors: t.factors.clone(),
                })
                .collect(),
        }
    }

    pub fn add(&self, other: &Expr) -> Expr {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Expr { terms }
    }

    pub fn sub(&self, other: &Expr) -> Expr {
        self.add(&other.scale(&Coeff::from_int(-1)))
    }

    /// Free indices of the first term (canonical reference), sorted.
    pub fn free_indices(&self) -> Vec<Index> {
        self.terms
            .first()
            .map(|t| t.free_indices())
            .unwrap_or_default()
    }

    /// Symbols appearing anywhere in the expression.
    pub fn symbols(&self) -> Vec<SymId> {
        let mut v: Vec<SymId> = self
            .terms
            .iter()
            .flat_map(|t| t.factors.iter().map(|f| f.sym))
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

fn fmt_free_set(frees: &[Index]) -> String {
    if frees.is_empty() {
        return "(scalar)".to_string();
    }
    frees
        .iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Checks the index-occurrence invariants of a single term.
pub fn validate_term(term: &Term, table: &SymbolTable) -> Result<(), IrError> {
    let mut seen: HashMap<&str, Vec<Variance>> = HashMap::new();
    for factor in &term.factors {
        let decl = table.tensor(factor.sym);
        if factor.slots.len() != decl.rank {
            return Err(IrError::ArityMismatch(
                decl.name.clone(),
                factor.slots.len(),
                decl.rank,
            ));
        }
        for idx in factor.indices() {
            seen.entry(idx.name.as_str()).or_default().push(idx.variance);
        }
    }
    for (name, occurrences) in seen {
        match occurrences.len() {
            1 => {}
            2 => {
                if occurrences[0] == occurrences[1] {
                    return Err(IrError::SameVarianceRepeat(name.to_string()));
                }
            }
            _ => return Err(IrError::IndexTriple(name.to_string())),
        }
    }
    Ok(())
}

/// Validates every term and the cross-term free-index agreement.
pub fn validate(expr: &Expr, table: &SymbolTable) -> Result<(), IrError> {
    let mut reference: Option<Vec<Index>> = None;
    for term in &expr.terms {
        validate_term(term, table)?;
        let frees = term.free_indices();
        match &reference {
            None => reference = Some(frees),
            Some(r) => {
                if *r != frees {
                    return Err(IrError::FreeIndexMismatch(
                        fmt_free_set(r),
                        fmt_free_set(&frees),
                    ));
                }
            }
        }
    }
    Ok(())
}

/// Formal linear combination of expressions sharing one free-index set.
pub fn combine(parts: &[(Coeff, &Expr)], table: &SymbolTable) -> Result<Expr, IrError> {
    let mut out = Expr::zero();
    for (c, e) in parts {
        out = out.add(&e.scale(c));
    }
    validate(&out, table)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> SymbolTable {
        let mut t = SymbolTable::new(4);
        t.declare_tensor("A", 1, vec![], vec![], BigRational::zero(), Role::None)
            .unwrap();
        t.declare_tensor("B", 1, vec![], vec![], BigRational::zero(), Role::None)
            .unwrap();
        t
    }

    fn term(factors: Vec<Factor>) -> Term {
        Term {
            coeff: Coeff::one(),
            factors,
        }
    }

    #[test]
    fn contraction_is_valid() {
        let t = table();
        let a = t.tensor_id("A").unwrap();
        let b = t.tensor_id("B").unwrap();
        let tm = term(vec![
            Factor::new(a, vec![Index::lower("a")]),
            Factor::new(b, vec![Index::upper("a")]),
        ]);
        assert!(validate_term(&tm, &t).is_ok());
    }

    #[test]
    fn same_variance_repeat_rejected() {
        let t = table();
        let a = t.tensor_id("A").unwrap();
        let b = t.tensor_id("B").unwrap();
        let tm = term(vec![
            Factor::new(a, vec![Index::lower("a")]),
            Factor::new(b, vec![Index::lower("a")]),
        ]);
        assert_eq!(
            validate_term(&tm, &t),
            Err(IrError::SameVarianceRepeat("a".into()))
        );
    }

    #[test]
    fn free_index_mismatch_rejected() {
        let t = table();
        let a = t.tensor_id("A").unwrap();
        let b = t.tensor_id("B").unwrap();
        let e = Expr::from_terms(vec![
            term(vec![Factor::new(a, vec![Index::lower("a")])]),
            term(vec![Factor::new(b, vec![Index::lower("b")])]),
        ]);
        assert!(matches!(
            validate(&e, &t),
            Err(IrError::FreeIndexMismatch(_, _))
        ));
    }

    #[test]
    fn riemann_group_closes_to_eight() {
        let t = SymbolTable::with_geometry(4);
        let r = t.tensor_id("R").unwrap();
        assert_eq!(t.tensor(r).group.len(), 8);
    }

    #[test]
    fn duplicate_declaration_rejected() {
        let mut t = table();
        let err = t
            .declare_tensor("A", 2, vec![], vec![], BigRational::zero(), Role::None)
            .unwrap_err();
        assert_eq!(err, IrError::DuplicateName("A".into()));
    }
}
