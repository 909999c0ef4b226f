//! Equation registry and the derivation step engine.
//!
//! A derivation is an ordered script of steps: declare symbols, define
//! equations (expressions asserted to vanish), solve a linear equation
//! for an undifferentiated symbol, substitute the result everywhere
//! (distributing derivative strings by Leibniz), form linear
//! combinations, contract with tensor factors, apply a coupling-constant
//! assignment, reorder derivatives, rewrite contracted curvature, and
//! assert canonical or numeric vanishing. Failed assertions abort the
//! run with the offending canonical residue in the report.

use crate::calculus::{
    covariant_derivative, normal_order, ricci_rewrite, zero_symbols, CalcError, RICCI_CONVENTION,
};
use crate::canon::{canonicalize, CanonError};
use crate::coeff::{Coeff, Radical, ScalarId};
use crate::ir::{validate, Expr, Factor, Index, IrError, SymId, SymbolTable, Term};
use crate::oracle::{oracle_check, OracleError, SampleMode};
use crate::parse::{parse_expr, parse_tensor_decl, print_expr, ParseError, TensorDeclSpec};
use serde::Serialize;
use std::collections::{HashMap, HashSet};
use thiserror::Error;

#[derive(Error, Debug)]
pub enum DerivationError {
    #[error("equation `{0}` is not defined")]
    UnknownEquation(String),
    #[error("binding `{0}` is not defined")]
    UnknownBinding(String),
    #[error("assignment `{0}` is not defined")]
    UnknownAssignment(String),
    #[error("step name `{0}` is already used")]
    DuplicateStep(String),
    #[error("symbol `{0}` does not occur in `{1}`")]
    SymbolAbsent(String, String),
    #[error("symbol `{0}` occurs only under derivatives in `{1}`")]
    UnderDerivative(String, String),
    #[error("symbol `{0}` occurs in several terms of `{1}`; refusing to pick one")]
    MultipleOccurrences(String, String),
    #[error("symbol `{0}` is not isolated as a single factor in its term")]
    NotIsolated(String),
    #[error("coefficient of `{0}` is not invertible")]
    NotInvertible(String),
    #[error("replacement for `{0}` mentions the symbol itself")]
    RecursiveReplacement(String),
    #[error("replacement free indices do not match the slots of `{0}`")]
    PatternMismatch(String),
    #[error("contraction factor must be a single term")]
    MultiplyNotSingleTerm(String),
    #[error("coupling choice `{0}` is not a declared scalar")]
    UnknownChoice(String),
    #[error("pivot `{0}` vanished while solving the coupling relations")]
    PivotZero(String),
    #[error("coupling choices are inconsistent with the relations ({0})")]
    Inconsistent(String),
    #[error("in step `{step}`: {source}")]
    Step {
        step: String,
        #[source]
        source: Box<DerivationError>,
    },
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Ir(#[from] IrError),
    #[error(transparent)]
    Canon(#[from] CanonError),
    #[error(transparent)]
    Calc(#[from] CalcError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// A named expression asserted to vanish.
#[derive(Clone, Debug)]
pub struct Equation {
    pub name: String,
    pub lhs: Expr,
    pub provenance: Vec<String>,
}

/// Result of solving an equation for a symbol: the symbol's slot
/// pattern and the expression that replaces it.
#[derive(Clone, Debug)]
pub struct Replacement {
    pub symbol: SymId,
    pub params: Vec<Index>,
    pub body: Expr,
}

/// Solves `eq = 0` for `sym`: the symbol must occur exactly once,
/// undifferentiated, isolated as the single factor of its term, with an
/// invertible scalar coefficient.
pub fn solve_for(
    eq: &Equation,
    sym: SymId,
    table: &SymbolTable,
) -> Result<Replacement, DerivationError> {
    let name = table.tensor(sym).name.clone();
    let mut occurrence: Option<usize> = None;
    let mut under_derivative = false;
    for (ti, term) in eq.lhs.terms.iter().enumerate() {
        for f in &term.factors {
            if f.sym != sym {
                continue;
            }
            if !f.derivs.is_empty() {
                under_derivative = true;
                continue;
            }
            match occurrence {
                None => occurrence = Some(ti),
                Some(prev) if prev == ti => {
                    return Err(DerivationError::NotIsolated(name));
                }
                Some(_) => {
                    return Err(DerivationError::MultipleOccurrences(name, eq.name.clone()))
                }
            }
        }
    }
    let Some(ti) = occurrence else {
        if under_derivative {
            return Err(DerivationError::UnderDerivative(name, eq.name.clone()));
        }
        return Err(DerivationError::SymbolAbsent(name, eq.name.clone()));
    };
    if under_derivative {
        return Err(DerivationError::UnderDerivative(name, eq.name.clone()));
    }
    let host = &eq.lhs.terms[ti];
    if host.factors.len() != 1 {
        return Err(DerivationError::NotIsolated(name));
    }
    if host.coeff.is_zero() {
        return Err(DerivationError::NotInvertible(name));
    }
    let params = host.factors[0].slots.clone();
    let scale = host.coeff.inv().neg();
    let rest: Vec<Term> = eq
        .lhs
        .terms
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != ti)
        .map(|(_, t)| t.clone())
        .collect();
    let body = Expr::from_terms(rest).scale(&scale);
    Ok(Replacement {
        symbol: sym,
        params,
        body,
    })
}

fn fresh_pool(used: &mut HashSet<String>, prefix: &str) -> impl FnMut() -> String {
    let mut k = 0usize;
    let prefix = prefix.to_string();
    let mut used = std::mem::take(used);
    move || loop {
        let name = format!("{prefix}{k}");
        k += 1;
        if !used.contains(&name) {
            used.insert(name.clone());
            return name;
        }
    }
}

/// Substitutes `repl` for every occurrence of its symbol in `target`,
/// re-applying derivative strings by Leibniz and freshening dummies.
pub fn substitute(
    target: &Equation,
    repl: &Replacement,
    out_name: &str,
    table: &SymbolTable,
) -> Result<Equation, DerivationError> {
    let name = table.tensor(repl.symbol).name.clone();
    if repl.body.symbols().contains(&repl.symbol) {
        return Err(DerivationError::RecursiveReplacement(name));
    }
    {
        let mut body_frees = repl.body.free_indices();
        let mut params = repl.params.clone();
        body_frees.sort_by(|a, b| a.name.cmp(&b.name));
        params.sort_by(|a, b| a.name.cmp(&b.name));
        let free_names: Vec<&String> = body_frees.iter().map(|i| &i.name).collect();
        let param_names: Vec<&String> = params.iter().map(|i| &i.name).collect();
        if free_names != param_names {
            return Err(DerivationError::PatternMismatch(name));
        }
    }
    let mut pending: Vec<Term> = target.lhs.terms.clone();
    let mut done: Vec<Term> = Vec::new();
    while let Some(term) = pending.pop() {
        let Some(fi) = term.factors.iter().position(|f| f.sym == repl.symbol) else {
            done.push(term);
            continue;
        };
        let occurrence = term.factors[fi].clone();
        let others: Vec<Factor> = term
            .factors
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != fi)
            .map(|(_, f)| f.clone())
            .collect();

        // Freshen the body's dummy names against everything in the term.
        let mut used: HashSet<String> = term.indices().map(|i| i.name.clone()).collect();
        used.extend(repl.params.iter().map(|i| i.name.clone()));
        let body_frees: HashSet<String> =
            repl.body.free_indices().iter().map(|i| i.name.clone()).collect();
        used.extend(body_frees.iter().cloned());
        let mut fresh = fresh_pool(&mut used, "u");
        let mut body = repl.body.clone();
        let body_dummies: Vec<String> = {
            let mut names: Vec<String> = Vec::new();
            for t in &body.terms {
                for n in t.index_names() {
                    if !body_frees.contains(&n) && !names.contains(&n) {
                        names.push(n);
                    }
                }
            }
            names
        };
        for dn in body_dummies {
            let new = fresh();
            body = rename_everywhere(&body, &dn, &new);
        }
        // Map parameter names onto the occurrence's actual slots, with
        // variance adjustment where the occurrence is raised/lowered.
        // The renaming is simultaneous so swapped patterns stay distinct.
        let mapping: Vec<(Index, Index)> = repl
            .params
            .iter()
            .cloned()
            .zip(occurrence.slots.iter().cloned())
            .collect();
        body = rename_simultaneous(&body, &mapping);
        // Re-apply the occurrence's derivative string, innermost first.
        for d in occurrence.derivs.iter().rev() {
            body = covariant_derivative(&body, d, table)?;
        }
        for bt in body.terms {
            let mut factors = others.clone();
            factors.extend(bt.factors);
            pending.push(Term {
                coeff: term.coeff.mul(&bt.coeff),
                factors,
            });
        }
    }
    let lhs = Expr::from_terms(done);
    validate(&lhs, table)?;
    let mut provenance = target.provenance.clone();
    provenance.push(format!("substitute {} into {}", name, target.name));
    Ok(Equation {
        name: out_name.to_string(),
        lhs,
        provenance,
    })
}

fn rename_everywhere(expr: &Expr, from: &str, to: &str) -> Expr {
    let mut out = expr.clone();
    for t in out.terms.iter_mut() {
        for f in t.factors.iter_mut() {
            for idx in f.derivs.iter_mut().chain(f.slots.iter_mut()) {
                if idx.name == from {
                    idx.name = to.to_string();
                }
            }
        }
    }
    out
}

/// Simultaneously renames free parameter indices to target indices,
/// flipping occurrence variance where parameter and target variances
/// differ (an absorbed metric raising).
fn rename_simultaneous(expr: &Expr, mapping: &[(Index, Index)]) -> Expr {
    let mut out = expr.clone();
    for t in out.terms.iter_mut() {
        for f in t.factors.iter_mut() {
            for idx in f.derivs.iter_mut().chain(f.slots.iter_mut()) {
                if let Some((param, actual)) =
                    mapping.iter().find(|(p, _)| p.name == idx.name)
                {
                    let flip = param.variance != actual.variance;
                    idx.name = actual.name.clone();
                    if flip {
                        idx.variance = idx.variance.flip();
                    }
                }
            }
        }
    }
    out
}

/// Multiplies an equation by one tensor term (used for contractions
/// such as tracing with the inverse metric).
pub fn multiply(
    target: &Equation,
    factor_expr: &Expr,
    out_name: &str,
    table: &SymbolTable,
) -> Result<Equation, DerivationError> {
    if factor_expr.terms.len() != 1 {
        return Err(DerivationError::MultiplyNotSingleTerm(out_name.to_string()));
    }
    let factor_term = &factor_expr.terms[0];
    let factor_names: HashSet<String> = factor_term.indices().map(|i| i.name.clone()).collect();
    let mut terms = Vec::new();
    for term in &target.lhs.terms {
        // Freshen the term's dummies against the contraction factor.
        let frees: HashSet<String> =
            term.free_indices().iter().map(|i| i.name.clone()).collect();
        let mut used: HashSet<String> = term.indices().map(|i| i.name.clone()).collect();
        used.extend(factor_names.iter().cloned());
        let mut fresh = fresh_pool(&mut used, "v");
        let mut t = Expr::from_terms(vec![term.clone()]);
        let dummy_names: Vec<String> = term
            .index_names()
            .into_iter()
            .filter(|n| !frees.contains(n) && factor_names.contains(n))
            .collect();
        for dn in dummy_names {
            let new = fresh();
            t = rename_everywhere(&t, &dn, &new);
        }
        let base = &t.terms[0];
        let mut factors = factor_term.factors.clone();
        factors.extend(base.factors.clone());
        terms.push(Term {
            coeff: base.coeff.mul(&factor_term.coeff),
            factors,
        });
    }
    let lhs = Expr::from_terms(terms);
    validate(&lhs, table)?;
    Ok(Equation {
        name: out_name.to_string(),
        lhs,
        provenance: vec![format!("contract {}", target.name)],
    })
}

/// Exact assignment of the twelve coupling constants with the moment
/// parameter left free (or pinned by a choice).
#[derive(Clone, Debug)]
pub struct LambdaAssignment {
    pub values: Vec<(ScalarId, Coeff)>,
}

impl LambdaAssignment {
    pub fn as_map(&self) -> HashMap<ScalarId, Coeff> {
        self.values.iter().cloned().collect()
    }

    /// Numeric environment at a concrete moment value.
    pub fn numeric_env(
        &self,
        table: &SymbolTable,
        mu: &Radical,
    ) -> Result<HashMap<ScalarId, Radical>, DerivationError> {
        let mut env = HashMap::new();
        if let Some(mu_id) = table.scalar_id("mu") {
            env.insert(mu_id, mu.clone());
        }
        let mut out = HashMap::new();
        for (id, c) in &self.values {
            let v = c
                .eval(&env)
                .map_err(|e| DerivationError::Inconsistent(e.to_string()))?;
            out.insert(*id, v);
        }
        Ok(out)
    }
}

const LAMBDA_COUNT: usize = 12;

fn lambda_ids(table: &mut SymbolTable) -> Result<Vec<ScalarId>, DerivationError> {
    let mut ids = Vec::with_capacity(LAMBDA_COUNT);
    for k in 1..=LAMBDA_COUNT {
        let name = format!("lam{k}");
        let id = match table.scalar_id(&name) {
            Some(id) => id,
            None => table.declare_scalar(&name)?,
        };
        ids.push(id);
    }
    Ok(ids)
}

/// The four relations the couplings must satisfy, as polynomials that
/// must reduce to zero.
pub fn coupling_relations(lam: &[ScalarId]) -> Vec<Coeff> {
    let l = |k: usize| Coeff::scalar(lam[k - 1]);
    vec![
        // 2 l10 l11 - (2/3) l9 l12 - 1
        Coeff::from_int(2)
            .mul(&l(10))
            .mul(&l(11))
            .sub(&Coeff::from_ratio(2, 3).mul(&l(9)).mul(&l(12)))
            .sub(&Coeff::one()),
        // l4 l7 + l6 l8 + (8/9) l9 l12 - 1/3
        l(4).mul(&l(7))
            .add(&l(6).mul(&l(8)))
            .add(&Coeff::from_ratio(8, 9).mul(&l(9)).mul(&l(12)))
            .sub(&Coeff::from_ratio(1, 3)),
        // l1 l3 + l2 l5 + 1/4
        l(1).mul(&l(3)).add(&l(2).mul(&l(5))).add(&Coeff::from_ratio(1, 4)),
        // (l1 l4 + l2 l6)(l3 l7 + l5 l8) + 1/12
        l(1).mul(&l(4))
            .add(&l(2).mul(&l(6)))
            .mul(&l(3).mul(&l(7)).add(&l(5).mul(&l(8))))
            .add(&Coeff::from_ratio(1, 12)),
    ]
}

/// Solves the coupling relations exactly. Free pivots default to
/// `lam1=1, lam2=0, lam5=0, lam7=1, lam8=1, lam9=mu, lam11=1, lam12=1`;
/// `choices` may override pivots (and pin `mu`). The derived constants
/// `lam3, lam4, lam6, lam10` follow by exact elimination; derived
/// choices are cross-checked instead of solved.
pub fn lambda_solve(
    table: &mut SymbolTable,
    choices: &HashMap<String, Coeff>,
) -> Result<LambdaAssignment, DerivationError> {
    let lam = lambda_ids(table)?;
    let mu_id = match table.scalar_id("mu") {
        Some(id) => id,
        None => table.declare_scalar("mu")?,
    };
    for key in choices.keys() {
        let known = key == "mu"
            || (key.strip_prefix("lam"))
                .and_then(|k| k.parse::<usize>().ok())
                .is_some_and(|k| (1..=LAMBDA_COUNT).contains(&k));
        if !known {
            return Err(DerivationError::UnknownChoice(key.clone()));
        }
    }
    let pick = |k: usize, default: Coeff| -> Coeff {
        choices.get(&format!("lam{k}")).cloned().unwrap_or(default)
    };
    let mu = Coeff::scalar(mu_id);
    let l1 = pick(1, Coeff::one());
    let l2 = pick(2, Coeff::zero());
    let l5 = pick(5, Coeff::zero());
    let l7 = pick(7, Coeff::one());
    let l8 = pick(8, Coeff::one());
    let l9 = pick(9, mu.clone());
    let l11 = pick(11, Coeff::one());
    let l12 = pick(12, Coeff::one());
    if l1.is_zero() {
        return Err(DerivationError::PivotZero("lam1".into()));
    }
    if l11.is_zero() {
        return Err(DerivationError::PivotZero("lam11".into()));
    }
    // Third relation.
    let l3 = Coeff::from_ratio(-1, 4).sub(&l2.mul(&l5)).div(&l1);
    // Product relation fixes l1 l4 + l2 l6 through c2.
    let c2 = l3.mul(&l7).add(&l5.mul(&l8));
    if c2.is_zero() {
        return Err(DerivationError::PivotZero("lam3*lam7+lam5*lam8".into()));
    }
    let r1 = Coeff::from_ratio(1, 3).sub(&Coeff::from_ratio(8, 9).mul(&l9).mul(&l12));
    let r2 = Coeff::from_ratio(-1, 12).div(&c2);
    let det = l7.mul(&l2).sub(&l8.mul(&l1));
    if det.is_zero() {
        return Err(DerivationError::PivotZero("lam7*lam2-lam8*lam1".into()));
    }
    let l4 = r1.mul(&l2).sub(&r2.mul(&l8)).div(&det);
    let l6 = l7.mul(&r2).sub(&l1.mul(&r1)).div(&det);
    // First relation.
    let l10 = Coeff::one()
        .add(&Coeff::from_ratio(2, 3).mul(&l9).mul(&l12))
        .div(&Coeff::from_int(2).mul(&l11));

    let mut values: Vec<Coeff> = vec![l1, l2, l3, l4, l5, l6, l7, l8, l9, l10, l11, l12];
    // Pin the moment parameter if chosen.
    if let Some(mu_val) = choices.get("mu") {
        let mut map = HashMap::new();
        map.insert(mu_id, mu_val.clone());
        for v in values.iter_mut() {
            *v = v.subst(&map);
        }
    }
    // Cross-check derived entries the caller tried to fix.
    for (k, v) in values.iter().enumerate() {
        if let Some(chosen) = choices.get(&format!("lam{}", k + 1)) {
            if chosen != v {
                return Err(DerivationError::Inconsistent(format!(
                    "lam{} would need to be different from the chosen value",
                    k + 1
                )));
            }
        }
    }
    let assignment = LambdaAssignment {
        values: lam.iter().copied().zip(values).collect(),
    };
    // Exact verification of all four relations.
    let map = assignment.as_map();
    for (k, rel) in coupling_relations(&lam).iter().enumerate() {
        let reduced = rel.subst(&map);
        if !reduced.is_zero() {
            return Err(DerivationError::Inconsistent(format!(
                "relation {} does not vanish",
                k + 1
            )));
        }
    }
    Ok(assignment)
}

/// Replaces every coupling constant by its assigned value.
pub fn apply_constraints(expr: &Expr, assignment: &LambdaAssignment) -> Expr {
    let map = assignment.as_map();
    Expr::from_terms(
        expr.terms
            .iter()
            .map(|t| Term {
                coeff: t.coeff.subst(&map),
                factors: t.factors.clone(),
            })
            .filter(|t| !t.coeff.is_zero())
            .collect(),
    )
}

/// One parsed script step.
#[derive(Clone, Debug)]
pub struct Step {
    pub name: String,
    pub op: StepOp,
    pub line: usize,
    pub note: Option<String>,
}

#[derive(Clone, Debug)]
pub enum StepOp {
    Scalars(Vec<String>),
    Tensor(TensorDeclSpec),
    Define(String),
    Lambdas(Vec<(String, String)>),
    Solve { eq: String, symbol: String },
    Substitute { eq: String, symbol: String, binding: String },
    Combine(Vec<(i8, Option<String>, String)>),
    Multiply { eq: String, factor: String },
    Differentiate { eq: String, index: String },
    Apply { eq: String, assignment: String },
    NormalOrder { eq: String },
    Ricci { eq: String },
    Flatten { eq: String, symbols: Vec<String> },
    AssertZero { target: String },
    AssertEqual { a: String, b: String },
    Oracle { eq: String, trials: Option<usize>, seed: Option<u64>, flat: bool, no_cyclic: bool },
}

#[derive(Clone, Debug, Default)]
pub struct Script {
    pub steps: Vec<Step>,
}

fn parse_combine_args(rest: &str, line: usize) -> Result<Vec<(i8, Option<String>, String)>, ParseError> {
    let mut out = Vec::new();
    let bytes: Vec<char> = rest.chars().collect();
    let mut pos = 0usize;
    let err = |msg: &str| ParseError {
        message: format!("{msg} (line {line})"),
        span: (0, rest.len()),
    };
    let mut sign: i8 = 1;
    loop {
        while pos < bytes.len() && bytes[pos].is_whitespace() {
            pos += 1;
        }
        if pos >= bytes.len() {
            break;
        }
        match bytes[pos] {
            '+' => {
                sign = 1;
                pos += 1;
                continue;
            }
            '-' => {
                sign = -1;
                pos += 1;
                continue;
            }
            _ => {}
        }
        let coeff = if bytes[pos] == '(' {
            let mut depth = 0i32;
            let start = pos;
            while pos < bytes.len() {
                match bytes[pos] {
                    '(' => depth += 1,
                    ')' => {
                        depth -= 1;
                        if depth == 0 {
                            break;
                        }
                    }
                    _ => {}
                }
                pos += 1;
            }
            if depth != 0 {
                return Err(err("unbalanced parentheses in combination"));
            }
            let text: String = bytes[start..=pos].iter().collect();
            pos += 1;
            while pos < bytes.len() && bytes[pos].is_whitespace() {
                pos += 1;
            }
            if pos >= bytes.len() || bytes[pos] != '*' {
                return Err(err("expected `*` after combination coefficient"));
            }
            pos += 1;
            Some(text)
        } else {
            None
        };
        while pos < bytes.len() && bytes[pos].is_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && (bytes[pos].is_alphanumeric() || bytes[pos] == '_') {
            pos += 1;
        }
        if start == pos {
            return Err(err("expected an equation name in combination"));
        }
        let name: String = bytes[start..pos].iter().collect();
        out.push((sign, coeff, name));
        sign = 1;
    }
    if out.is_empty() {
        return Err(err("empty combination"));
    }
    Ok(out)
}

/// Parses a line-oriented derivation script: `name: command args`, with
/// `#` comment lines; a comment directly above a step annotates it.
pub fn parse_script(input: &str) -> Result<Script, ParseError> {
    let mut steps = Vec::new();
    let mut names: HashSet<String> = HashSet::new();
    let mut pending_note: Option<String> = None;
    for (lineno, raw) in input.lines().enumerate() {
        let line = lineno + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            pending_note = None;
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            let text = comment.trim();
            // The first line of a comment block annotates the next step.
            if !text.is_empty() && pending_note.is_none() {
                pending_note = Some(text.to_string());
            }
            continue;
        }
        let Some((name, rest)) = trimmed.split_once(':') else {
            return Err(ParseError {
                message: format!("line {line}: expected `name: command`"),
                span: (0, raw.len()),
            });
        };
        let name = name.trim().to_string();
        if name.is_empty() || !names.insert(name.clone()) {
            return Err(ParseError {
                message: format!("line {line}: duplicate or empty step name `{name}`"),
                span: (0, raw.len()),
            });
        }
        let rest = rest.trim();
        let (cmd, args) = rest.split_once(char::is_whitespace).unwrap_or((rest, ""));
        let args = args.trim();
        let op = match cmd {
            "scalars" | "scalar" => {
                StepOp::Scalars(args.split_whitespace().map(|s| s.to_string()).collect())
            }
            "tensor" => StepOp::Tensor(parse_tensor_decl(args, 0).map_err(|e| ParseError {
                message: format!("line {line}: {}", e.message),
                span: e.span,
            })?),
            "define" => StepOp::Define(args.to_string()),
            "lambdas" => {
                let mut choices = Vec::new();
                for part in args.split_whitespace() {
                    let Some((k, v)) = part.split_once('=') else {
                        return Err(ParseError {
                            message: format!("line {line}: expected key=value in lambdas"),
                            span: (0, raw.len()),
                        });
                    };
                    choices.push((k.to_string(), v.to_string()));
                }
                StepOp::Lambdas(choices)
            }
            "solve" => {
                let parts: Vec<&str> = args.split_whitespace().collect();
                if parts.len() != 2 {
                    return Err(ParseError {
                        message: format!("line {line}: solve takes `EQ SYMBOL`"),
                        span: (0, raw.len()),
                    });
                }
                StepOp::Solve {
                    eq: parts[0].to_string(),
                    symbol: parts[1].to_string(),
                }
            }
            "substitute" => {
                let parts: Vec<&str> = args.split_whitespace().collect();
                if parts.len() != 3 {
                    return Err(ParseError {
                        message: format!("line {line}: substitute takes `EQ SYMBOL BINDING`"),
                        span: (0, raw.len()),
                    });
                }
                StepOp::Substitute {
                    eq: parts[0].to_string(),
                    symbol: parts[1].to_string(),
                    binding: parts[2].to_string(),
                }
            }
            "combine" => StepOp::Combine(parse_combine_args(args, line)?),
            "multiply" => {
                let Some((eq, factor)) = args.split_once(char::is_whitespace) else {
                    return Err(ParseError {
                        message: format!("line {line}: multiply takes `EQ FACTOR`"),
                        span: (0, raw.len()),
                    });
                };
                StepOp::Multiply {
                    eq: eq.to_string(),
                    factor: factor.trim().to_string(),
                }
            }
            "differentiate" => {
                let Some((eq, index)) = args.split_once(char::is_whitespace) else {
                    return Err(ParseError {
                        message: format!("line {line}: differentiate takes `EQ INDEX`"),
                        span: (0, raw.len()),
                    });
                };
                StepOp::Differentiate {
                    eq: eq.to_string(),
                    index: index.trim().to_string(),
                }
            }
            "apply" => {
                let parts: Vec<&str> = args.split_whitespace().collect();
                if parts.len() != 2 {
                    return Err(ParseError {
                        message: format!("line {line}: apply takes `EQ ASSIGNMENT`"),
                        span: (0, raw.len()),
                    });
                }
                StepOp::Apply {
                    eq: parts[0].to_string(),
                    assignment: parts[1].to_string(),
                }
            }
            "normal_order" => StepOp::NormalOrder {
                eq: args.to_string(),
            },
            "ricci" => StepOp::Ricci {
                eq: args.to_string(),
            },
            "flatten" => {
                let mut it = args.split_whitespace();
                let Some(eq) = it.next() else {
                    return Err(ParseError {
                        message: format!("line {line}: flatten takes `EQ SYMBOLS..`"),
                        span: (0, raw.len()),
                    });
                };
                StepOp::Flatten {
                    eq: eq.to_string(),
                    symbols: it.map(|s| s.to_string()).collect(),
                }
            }
            "assert_zero" => StepOp::AssertZero {
                target: args.to_string(),
            },
            "assert_equal" => {
                let parts: Vec<&str> = args.split_whitespace().collect();
                if parts.len() != 2 {
                    return Err(ParseError {
                        message: format!("line {line}: assert_equal takes `A B`"),
                        span: (0, raw.len()),
                    });
                }
                StepOp::AssertEqual {
                    a: parts[0].to_string(),
                    b: parts[1].to_string(),
                }
            }
            "oracle" => {
                let mut it = args.split_whitespace();
                let Some(eq) = it.next() else {
                    return Err(ParseError {
                        message: format!("line {line}: oracle takes `EQ [trials=N] [seed=N]`"),
                        span: (0, raw.len()),
                    });
                };
                let mut trials = None;
                let mut seed = None;
                let mut flat = false;
                let mut no_cyclic = false;
                for part in it {
                    if let Some(v) = part.strip_prefix("trials=") {
                        trials = v.parse().ok();
                    } else if let Some(v) = part.strip_prefix("seed=") {
                        seed = v.parse().ok();
                    } else if part == "flat" {
                        flat = true;
                    } else if part == "nocyclic" {
                        no_cyclic = true;
                    } else {
                        return Err(ParseError {
                            message: format!("line {line}: unknown oracle option `{part}`"),
                            span: (0, raw.len()),
                        });
                    }
                }
                StepOp::Oracle {
                    eq: eq.to_string(),
                    trials,
                    seed,
                    flat,
                    no_cyclic,
                }
            }
            other => {
                return Err(ParseError {
                    message: format!("line {line}: unknown command `{other}`"),
                    span: (0, raw.len()),
                })
            }
        };
        steps.push(Step {
            name,
            op,
            line,
            note: pending_note.take(),
        });
    }
    Ok(Script { steps })
}

/// Global execution options for a script run.
#[derive(Clone, Debug)]
pub struct RunOptions {
    pub dimension: u32,
    pub seed: u64,
    pub trials: usize,
    pub no_cyclic: bool,
    pub format_json: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            dimension: 4,
            seed: 1,
            trials: 20,
            no_cyclic: false,
            format_json: false,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StepReport {
    pub name: String,
    pub command: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    pub millis: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub passed: bool,
    pub steps: Vec<StepReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ricci_convention: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
}

impl Report {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for s in &self.steps {
            out.push_str(&format!("[{}] {:<24} {}", s.status, s.name, s.command));
            if let Some(n) = &s.note {
                out.push_str(&format!("  # {n}"));
            }
            out.push('\n');
            if let Some(d) = &s.detail {
                out.push_str(&format!("      {d}\n"));
            }
        }
        if let Some(rc) = &self.ricci_convention {
            out.push_str(&format!("ricci convention: {rc}\n"));
        }
        for n in &self.notes {
            out.push_str(&format!("note: {n}\n"));
        }
        out.push_str(if self.passed {
            "result: all assertions passed\n"
        } else {
            "result: FAILED\n"
        });
        out
    }
}

/// Execution state: the symbol table plus every named artifact a script
/// has produced so far.
pub struct Session {
    pub table: SymbolTable,
    pub equations: HashMap<String, Equation>,
    pub bindings: HashMap<String, Replacement>,
    pub assignments: HashMap<String, LambdaAssignment>,
    pub options: RunOptions,
    equation_order: Vec<String>,
}

impl Session {
    pub fn new(options: RunOptions) -> Session {
        Session {
            table: SymbolTable::new(options.dimension),
            equations: HashMap::new(),
            bindings: HashMap::new(),
            assignments: HashMap::new(),
            options,
            equation_order: Vec::new(),
        }
    }

    pub fn equation(&self, name: &str) -> Result<&Equation, DerivationError> {
        self.equations
            .get(name)
            .ok_or_else(|| DerivationError::UnknownEquation(name.to_string()))
    }

    pub fn equation_names(&self) -> &[String] {
        &self.equation_order
    }

    fn register(&mut self, eq: Equation) {
        if !self.equations.contains_key(&eq.name) {
            self.equation_order.push(eq.name.clone());
        }
        self.equations.insert(eq.name.clone(), eq);
    }

    fn scalar_coeff(&self, text: &str) -> Result<Coeff, DerivationError> {
        let expr = parse_expr(text, &self.table)?;
        let mut acc = Coeff::zero();
        for t in &expr.terms {
            if !t.factors.is_empty() {
                return Err(DerivationError::MultiplyNotSingleTerm(text.to_string()));
            }
            acc = acc.add(&t.coeff);
        }
        Ok(acc)
    }

    fn exec_step(&mut self, step: &Step, report: &mut Report) -> Result<bool, DerivationError> {
        match &step.op {
            StepOp::Scalars(names) => {
                for n in names {
                    self.table.declare_scalar(n)?;
                }
            }
            StepOp::Tensor(spec) => {
                spec.declare(&mut self.table)?;
            }
            StepOp::Define(text) => {
                let lhs = parse_expr(text, &self.table)?;
                self.register(Equation {
                    name: step.name.clone(),
                    lhs,
                    provenance: vec!["defined".into()],
                });
            }
            StepOp::Lambdas(choices) => {
                let mut map = HashMap::new();
                for (k, v) in choices {
                    map.insert(k.clone(), self.scalar_coeff(v)?);
                }
                let assignment = lambda_solve(&mut self.table, &map)?;
                self.assignments.insert(step.name.clone(), assignment);
            }
            StepOp::Solve { eq, symbol } => {
                let sym = self
                    .table
                    .tensor_id(symbol)
                    .ok_or_else(|| IrError::UnknownSymbol(symbol.clone()))?;
                let equation = self.equation(eq)?.clone();
                let repl = solve_for(&equation, sym, &self.table)?;
                self.bindings.insert(step.name.clone(), repl);
            }
            StepOp::Substitute { eq, symbol, binding } => {
                let equation = self.equation(eq)?.clone();
                let repl = self
                    .bindings
                    .get(binding)
                    .ok_or_else(|| DerivationError::UnknownBinding(binding.clone()))?
                    .clone();
                let sym = self
                    .table
                    .tensor_id(symbol)
                    .ok_or_else(|| IrError::UnknownSymbol(symbol.clone()))?;
                if repl.symbol != sym {
                    return Err(DerivationError::PatternMismatch(symbol.clone()));
                }
                let out = substitute(&equation, &repl, &step.name, &self.table)?;
                self.register(out);
            }
            StepOp::Combine(parts) => {
                let mut acc = Expr::zero();
                for (sign, coeff_text, eq_name) in parts {
                    let eq = self.equation(eq_name)?.clone();
                    let mut c = match coeff_text {
                        Some(t) => self.scalar_coeff(t)?,
                        None => Coeff::one(),
                    };
                    if *sign < 0 {
                        c = c.neg();
                    }
                    acc = acc.add(&eq.lhs.scale(&c));
                }
                validate(&acc, &self.table)?;
                self.register(Equation {
                    name: step.name.clone(),
                    lhs: acc,
                    provenance: vec!["combine".into()],
                });
            }
            StepOp::Multiply { eq, factor } => {
                let equation = self.equation(eq)?.clone();
                let factor_expr = parse_expr(factor, &self.table)?;
                let out = multiply(&equation, &factor_expr, &step.name, &self.table)?;
                self.register(out);
            }
            StepOp::Differentiate { eq, index } => {
                let equation = self.equation(eq)?.clone();
                let idx = parse_index_arg(index, step.line)?;
                let lhs = covariant_derivative(&equation.lhs, &idx, &self.table)?;
                self.register(Equation {
                    name: step.name.clone(),
                    lhs,
                    provenance: vec![format!("differentiate {}", eq)],
                });
            }
            StepOp::Apply { eq, assignment } => {
                let equation = self.equation(eq)?.clone();
                let asg = self
                    .assignments
                    .get(assignment)
                    .ok_or_else(|| DerivationError::UnknownAssignment(assignment.clone()))?;
                let lhs = apply_constraints(&equation.lhs, asg);
                self.register(Equation {
                    name: step.name.clone(),
                    lhs,
                    provenance: vec![format!("apply {} to {}", assignment, eq)],
                });
            }
            StepOp::NormalOrder { eq } => {
                let equation = self.equation(eq)?.clone();
                let lhs = normal_order(&equation.lhs, &self.table)?;
                self.register(Equation {
                    name: step.name.clone(),
                    lhs,
                    provenance: vec![format!("normal_order {}", eq)],
                });
            }
            StepOp::Ricci { eq } => {
                let equation = self.equation(eq)?.clone();
                let lhs = ricci_rewrite(&equation.lhs, &self.table)?;
                report.ricci_convention = Some(RICCI_CONVENTION.to_string());
                self.register(Equation {
                    name: step.name.clone(),
                    lhs,
                    provenance: vec![format!("ricci contraction of {}", eq)],
                });
            }
            StepOp::Flatten { eq, symbols } => {
                let equation = self.equation(eq)?.clone();
                let ids: Result<Vec<SymId>, _> = symbols
                    .iter()
                    .map(|n| {
                        self.table
                            .tensor_id(n)
                            .ok_or_else(|| IrError::UnknownSymbol(n.clone()))
                    })
                    .collect();
                let lhs = zero_symbols(&equation.lhs, &ids?);
                self.register(Equation {
                    name: step.name.clone(),
                    lhs,
                    provenance: vec![format!("flatten {}", eq)],
                });
            }
            StepOp::AssertZero { target } => {
                let lhs = match self.equations.get(target) {
                    Some(eq) => eq.lhs.clone(),
                    None => parse_expr(target, &self.table)?,
                };
                let canon = canonicalize(&lhs, &self.table)?;
                if !canon.is_zero() {
                    return Ok(report_failure(
                        report,
                        step,
                        format!(
                            "canonical residue: {}",
                            print_expr(canon.expr(), &self.table)
                        ),
                    ));
                }
            }
            StepOp::AssertEqual { a, b } => {
                let ea = self.equation(a)?.lhs.clone();
                let eb = self.equation(b)?.lhs.clone();
                let canon = canonicalize(&ea.sub(&eb), &self.table)?;
                if !canon.is_zero() {
                    return Ok(report_failure(
                        report,
                        step,
                        format!(
                            "canonical residue: {}",
                            print_expr(canon.expr(), &self.table)
                        ),
                    ));
                }
            }
            StepOp::Oracle { eq, trials, seed, flat, no_cyclic } => {
                let equation = self.equation(eq)?.clone();
                let canon = canonicalize(&equation.lhs, &self.table)?.into_expr();
                let mode = SampleMode {
                    flat: *flat,
                    no_cyclic: *no_cyclic || self.options.no_cyclic,
                };
                let result = oracle_check(
                    &canon,
                    &self.table,
                    trials.unwrap_or(self.options.trials),
                    seed.unwrap_or(self.options.seed),
                    mode,
                    &HashMap::new(),
                )?;
                if !result.pass {
                    let detail = result
                        .failures
                        .first()
                        .and_then(|f| f.witness.clone())
                        .unwrap_or_else(|| "nonzero evaluation".into());
                    return Ok(report_failure(
                        report,
                        step,
                        format!(
                            "trial {} of {}: {detail}",
                            result.failures[0].trial, result.trials
                        ),
                    ));
                }
            }
        }
        Ok(true)
    }
}

fn parse_index_arg(text: &str, line: usize) -> Result<Index, ParseError> {
    let t = text.trim();
    let (variance, rest) = if let Some(r) = t.strip_prefix('^') {
        (crate::ir::Variance::Upper, r)
    } else if let Some(r) = t.strip_prefix('_') {
        (crate::ir::Variance::Lower, r)
    } else {
        return Err(ParseError {
            message: format!("line {line}: index must start with `^` or `_`"),
            span: (0, text.len()),
        });
    };
    let name = rest.trim_start_matches('{').trim_end_matches('}').trim();
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric()) {
        return Err(ParseError {
            message: format!("line {line}: bad index name `{name}`"),
            span: (0, text.len()),
        });
    }
    Ok(Index {
        name: name.to_string(),
        variance,
    })
}

fn command_name(op: &StepOp) -> &'static str {
    match op {
        StepOp::Scalars(_) => "scalars",
        StepOp::Tensor(_) => "tensor",
        StepOp::Define(_) => "define",
        StepOp::Lambdas(_) => "lambdas",
        StepOp::Solve { .. } => "solve",
        StepOp::Substitute { .. } => "substitute",
        StepOp::Combine(_) => "combine",
        StepOp::Multiply { .. } => "multiply",
        StepOp::Differentiate { .. } => "differentiate",
        StepOp::Apply { .. } => "apply",
        StepOp::NormalOrder { .. } => "normal_order",
        StepOp::Ricci { .. } => "ricci",
        StepOp::Flatten { .. } => "flatten",
        StepOp::AssertZero { .. } => "assert_zero",
        StepOp::AssertEqual { .. } => "assert_equal",
        StepOp::Oracle { .. } => "oracle",
    }
}

fn report_failure(report: &mut Report, step: &Step, detail: String) -> bool {
    report.passed = false;
    if let Some(last) = report.steps.last_mut() {
        last.status = "FAIL".into();
        last.detail = Some(detail);
    }
    let _ = step;
    false
}

/// Executes a script, producing a step-by-step report. Assertion
/// failures stop the run and mark the report failed; structural errors
/// (unknown names, parse failures) surface as `Err`.
pub fn run_script(script: &Script, options: RunOptions) -> Result<Report, DerivationError> {
    let mut session = Session::new(options);
    run_script_in(&mut session, script)
}

/// Executes a script inside an existing session (the session keeps all
/// produced equations, so callers can run oracle checks afterwards).
pub fn run_script_in(
    session: &mut Session,
    script: &Script,
) -> Result<Report, DerivationError> {
    let mut report = Report {
        passed: true,
        steps: Vec::new(),
        ricci_convention: None,
        notes: Vec::new(),
    };
    for step in &script.steps {
        let started = std::time::Instant::now();
        report.steps.push(StepReport {
            name: step.name.clone(),
            command: command_name(&step.op).to_string(),
            status: "ok".into(),
            note: step.note.clone(),
            detail: None,
            millis: 0,
        });
        let keep_going = session
            .exec_step(step, &mut report)
            .map_err(|e| DerivationError::Step {
                step: step.name.clone(),
                source: Box::new(e),
            })?;
        if let Some(last) = report.steps.last_mut() {
            last.millis = started.elapsed().as_millis() as u64;
        }
        if !keep_going {
            return Ok(report);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canon::is_zero;

    fn fixture() -> Session {
        let mut s = Session::new(RunOptions::default());
        crate::parse::parse_declarations(
            "scalars M e mu\n\
             tensor Psi rank=0 charge=e\n\
             tensor B rank=1 charge=e\n\
             tensor PsiS rank=2 sym=(+(2 1)) traceless=((1 2)) charge=e\n",
            &mut s.table,
        )
        .unwrap();
        s
    }

    #[test]
    fn solve_scalar_wave_equation() {
        let mut s = fixture();
        let lhs = parse_expr("2*D^{a} B_{a} + i*M*Psi", &s.table).unwrap();
        s.register(Equation {
            name: "w".into(),
            lhs,
            provenance: vec![],
        });
        let psi = s.table.tensor_id("Psi").unwrap();
        let repl = solve_for(s.equations.get("w").unwrap(), psi, &s.table).unwrap();
        // Psi = (2 i / M) D^{a} B_{a}
        let want = parse_expr("(2*i/M)*D^{a} B_{a}", &s.table).unwrap();
        assert!(crate::canon::canonical_eq(&repl.body, &want, &s.table).unwrap());
        // Substituting back yields a canonical zero.
        let eq = s.equations.get("w").unwrap().clone();
        let back = substitute(&eq, &repl, "back", &s.table).unwrap();
        assert!(is_zero(&back.lhs, &s.table).unwrap());
    }

    #[test]
    fn solve_rejects_derived_and_absent_symbols() {
        let mut s = fixture();
        let lhs = parse_expr("2*D^{a} B_{a} + i*M*Psi", &s.table).unwrap();
        s.register(Equation {
            name: "w".into(),
            lhs,
            provenance: vec![],
        });
        let b = s.table.tensor_id("B").unwrap();
        let eq = s.equations.get("w").unwrap();
        assert!(matches!(
            solve_for(eq, b, &s.table),
            Err(DerivationError::UnderDerivative(_, _))
        ));
        let psis = s.table.tensor_id("PsiS").unwrap();
        assert!(matches!(
            solve_for(eq, psis, &s.table),
            Err(DerivationError::SymbolAbsent(_, _))
        ));
    }

    #[test]
    fn substitution_distributes_derivatives() {
        let mut s = fixture();
        let def = parse_expr("Psi - M*D^{a} B_{a}", &s.table).unwrap();
        s.register(Equation {
            name: "def".into(),
            lhs: def,
            provenance: vec![],
        });
        let target = parse_expr("D_{c} Psi + B_{c}", &s.table).unwrap();
        s.register(Equation {
            name: "t".into(),
            lhs: target,
            provenance: vec![],
        });
        let psi = s.table.tensor_id("Psi").unwrap();
        let repl = solve_for(s.equations.get("def").unwrap(), psi, &s.table).unwrap();
        let eq = s.equations.get("t").unwrap().clone();
        let out = substitute(&eq, &repl, "out", &s.table).unwrap();
        let want = parse_expr("M*D_{c} D^{a} B_{a} + B_{c}", &s.table).unwrap();
        assert!(crate::canon::canonical_eq(&out.lhs, &want, &s.table).unwrap());
    }

    #[test]
    fn default_lambda_assignment_satisfies_relations() {
        let mut s = fixture();
        let asg = lambda_solve(&mut s.table, &HashMap::new()).unwrap();
        let lam: Vec<ScalarId> = (1..=12)
            .map(|k| s.table.scalar_id(&format!("lam{k}")).unwrap())
            .collect();
        for rel in coupling_relations(&lam) {
            assert!(rel.subst(&asg.as_map()).is_zero());
        }
        // c1 * c2 = -1/12 exactly.
        let map = asg.as_map();
        let l = |k: usize| map[&lam[k - 1]].clone();
        let c1 = l(1).mul(&l(4)).add(&l(2).mul(&l(6)));
        let c2 = l(3).mul(&l(7)).add(&l(5).mul(&l(8)));
        assert_eq!(c1.mul(&c2), Coeff::from_ratio(-1, 12));
    }

    #[test]
    fn mu_zero_forces_half() {
        let mut s = fixture();
        let mut choices = HashMap::new();
        choices.insert("mu".to_string(), Coeff::zero());
        let asg = lambda_solve(&mut s.table, &choices).unwrap();
        let map = asg.as_map();
        let l10 = map[&s.table.scalar_id("lam10").unwrap()].clone();
        let l11 = map[&s.table.scalar_id("lam11").unwrap()].clone();
        assert_eq!(l10.mul(&l11), Coeff::from_ratio(1, 2));
    }

    #[test]
    fn zero_pivot_rejected() {
        let mut s = fixture();
        let mut choices = HashMap::new();
        choices.insert("lam1".to_string(), Coeff::zero());
        assert!(matches!(
            lambda_solve(&mut s.table, &choices),
            Err(DerivationError::PivotZero(_))
        ));
    }

    #[test]
    fn script_runs_and_reports() {
        let text = "\
# a tiny wave system
s0: scalars M e
d0: tensor Psi rank=0 charge=e
d1: tensor B rank=1 charge=e
w: define 2*D^{a} B_{a} + i*M*Psi
bind: solve w Psi
sub: substitute w Psi bind
chk: assert_zero sub
";
        let script = parse_script(text).unwrap();
        let report = run_script(&script, RunOptions::default()).unwrap();
        assert!(report.passed);
        assert_eq!(report.steps.len(), 7);
        assert_eq!(report.steps[4].note, None);
        assert_eq!(report.steps[3].name, "w");
    }

    #[test]
    fn failed_assert_reports_residue() {
        let text = "\
s0: scalars M e
d1: tensor B rank=1 charge=e
w: define D^{a} B_{a}
chk: assert_zero w
never: define B_{a}
";
        let script = parse_script(text).unwrap();
        let report = run_script(&script, RunOptions::default()).unwrap();
        assert!(!report.passed);
        // The run stops at the failing assert.
        assert_eq!(report.steps.len(), 4);
        assert!(report.steps[3].detail.as_ref().unwrap().contains("residue"));
    }

    #[test]
    fn undefined_reference_is_an_error() {
        let text = "chk: assert_equal nope nada\n";
        let script = parse_script(text).unwrap();
        let err = run_script(&script, RunOptions::default()).unwrap_err();
        assert!(err.to_string().contains("nope"));
    }
}
