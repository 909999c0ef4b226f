//! Text form for indexed expressions and tensor declarations.
//!
//! The grammar follows the notation of first-order wave systems:
//! `_{..}`/`^{..}` index groups, explicit `*` or juxtaposition for
//! products, `D`/`Nabla` as prefix derivative operators binding the
//! next factor or parenthesized group, and exact scalar literals
//! (integers, fractions, `i`, `sqrt2`, `sqrt3`, declared scalar names).
//! `/` divides by a scalar-valued subexpression. Every error carries a
//! byte span into the input.

use crate::calculus::covariant_derivative;
use crate::coeff::Coeff;
use crate::ir::{
    validate_term, Expr, Factor, Index, IrError, Role, SignedPerm, SymbolTable, Term, Variance,
};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use thiserror::Error;

pub type Span = (usize, usize);

#[derive(Error, Debug, Clone, PartialEq, Eq)]
#[error("{message} at bytes {}..{}", span.0, span.1)]
pub struct ParseError {
    pub message: String,
    pub span: Span,
}

impl ParseError {
    fn new(message: impl Into<String>, span: Span) -> ParseError {
        ParseError {
            message: message.into(),
            span,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Int(String),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    Under,
    LBrace,
    RBrace,
    LParen,
    RParen,
}

#[derive(Clone, Debug)]
struct SpannedTok {
    tok: Tok,
    span: Span,
}

fn lex(input: &str) -> Result<Vec<SpannedTok>, ParseError> {
    let bytes = input.as_bytes();
    let mut out = Vec::new();
    let mut pos = 0usize;
    while pos < bytes.len() {
        let b = bytes[pos];
        let start = pos;
        match b {
            b' ' | b'\t' | b'\r' | b'\n' => {
                pos += 1;
                continue;
            }
            b'+' => out.push(SpannedTok { tok: Tok::Plus, span: (start, pos + 1) }),
            b'-' => out.push(SpannedTok { tok: Tok::Minus, span: (start, pos + 1) }),
            b'*' => out.push(SpannedTok { tok: Tok::Star, span: (start, pos + 1) }),
            b'/' => out.push(SpannedTok { tok: Tok::Slash, span: (start, pos + 1) }),
            b'^' => out.push(SpannedTok { tok: Tok::Caret, span: (start, pos + 1) }),
            b'_' => out.push(SpannedTok { tok: Tok::Under, span: (start, pos + 1) }),
            b'{' => out.push(SpannedTok { tok: Tok::LBrace, span: (start, pos + 1) }),
            b'}' => out.push(SpannedTok { tok: Tok::RBrace, span: (start, pos + 1) }),
            b'(' => out.push(SpannedTok { tok: Tok::LParen, span: (start, pos + 1) }),
            b')' => out.push(SpannedTok { tok: Tok::RParen, span: (start, pos + 1) }),
            b'0'..=b'9' => {
                while pos < bytes.len() && bytes[pos].is_ascii_digit() {
                    pos += 1;
                }
                out.push(SpannedTok {
                    tok: Tok::Int(input[start..pos].to_string()),
                    span: (start, pos),
                });
                continue;
            }
            b if b.is_ascii_alphabetic() => {
                while pos < bytes.len()
                    && (bytes[pos].is_ascii_alphanumeric() || bytes[pos] == b'\'')
                {
                    pos += 1;
                }
                out.push(SpannedTok {
                    tok: Tok::Ident(input[start..pos].to_string()),
                    span: (start, pos),
                });
                continue;
            }
            _ => {
                return Err(ParseError::new(
                    format!("unexpected character `{}`", &input[start..start + 1]),
                    (start, start + 1),
                ))
            }
        }
        pos += 1;
    }
    Ok(out)
}

/// A lowered parse value: a sum of terms, scalars being factorless terms.
#[derive(Clone, Debug)]
struct Value {
    expr: Expr,
    span: Span,
}

impl Value {
    fn as_scalar(&self) -> Option<Coeff> {
        let mut acc = Coeff::zero();
        for t in &self.expr.terms {
            if !t.factors.is_empty() {
                return None;
            }
            acc = acc.add(&t.coeff);
        }
        Some(acc)
    }
}

struct Parser<'a> {
    toks: Vec<SpannedTok>,
    pos: usize,
    table: &'a SymbolTable,
    len: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn span(&self) -> Span {
        self.toks
            .get(self.pos)
            .map(|t| t.span)
            .unwrap_or((self.len, self.len))
    }

    fn bump(&mut self) -> Option<SpannedTok> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<SpannedTok, ParseError> {
        match self.peek() {
            Some(t) if *t == tok => Ok(self.bump().unwrap()),
            _ => Err(ParseError::new(format!("expected {what}"), self.span())),
        }
    }

    fn parse_sum(&mut self) -> Result<Value, ParseError> {
        let start = self.span().0;
        let mut sign = 1i64;
        if matches!(self.peek(), Some(Tok::Minus)) {
            self.bump();
            sign = -1;
        } else if matches!(self.peek(), Some(Tok::Plus)) {
            self.bump();
        }
        let first = self.parse_product()?;
        let mut acc = if sign < 0 {
            first.expr.scale(&Coeff::from_int(-1))
        } else {
            first.expr
        };
        let mut frees = acc.free_indices();
        let mut have_terms = !acc.terms.is_empty();
        loop {
            let s = match self.peek() {
                Some(Tok::Plus) => 1i64,
                Some(Tok::Minus) => -1,
                _ => break,
            };
            self.bump();
            let next = self.parse_product()?;
            let scaled = if s < 0 {
                next.expr.scale(&Coeff::from_int(-1))
            } else {
                next.expr
            };
            if have_terms && !scaled.terms.is_empty() {
                let f2 = scaled.free_indices();
                if frees != f2 {
                    return Err(ParseError::new(
                        "free indices differ between summands",
                        next.span,
                    ));
                }
            } else if !scaled.terms.is_empty() {
                frees = scaled.free_indices();
                have_terms = true;
            }
            acc = acc.add(&scaled);
        }
        let end = self
            .toks
            .get(self.pos.saturating_sub(1))
            .map(|t| t.span.1)
            .unwrap_or(start);
        Ok(Value {
            expr: acc,
            span: (start, end),
        })
    }

    fn parse_product(&mut self) -> Result<Value, ParseError> {
        let start = self.span().0;
        let mut acc = self.parse_factor()?;
        loop {
            let divide = match self.peek() {
                Some(Tok::Star) => {
                    self.bump();
                    false
                }
                Some(Tok::Slash) => {
                    self.bump();
                    true
                }
                // Juxtaposition: a factor can start only with these.
                Some(Tok::Ident(_)) | Some(Tok::Int(_)) | Some(Tok::LParen) => false,
                _ => break,
            };
            let rhs = self.parse_factor()?;
            if divide {
                let Some(c) = rhs.as_scalar() else {
                    return Err(ParseError::new(
                        "division requires a scalar divisor",
                        rhs.span,
                    ));
                };
                if c.is_zero() {
                    return Err(ParseError::new("division by zero", rhs.span));
                }
                acc = Value {
                    expr: acc.expr.scale(&c.inv()),
                    span: (start, rhs.span.1),
                };
            } else {
                acc = self.multiply(acc, rhs)?;
            }
        }
        for term in &acc.expr.terms {
            validate_term(term, self.table)
                .map_err(|e| ParseError::new(e.to_string(), acc.span))?;
        }
        Ok(acc)
    }

    fn multiply(&self, lhs: Value, rhs: Value) -> Result<Value, ParseError> {
        let span = (lhs.span.0, rhs.span.1);
        let mut terms = Vec::new();
        for a in &lhs.expr.terms {
            for b in &rhs.expr.terms {
                let mut factors = a.factors.clone();
                factors.extend(b.factors.clone());
                terms.push(Term {
                    coeff: a.coeff.mul(&b.coeff),
                    factors,
                });
            }
        }
        Ok(Value {
            expr: Expr::from_terms(terms),
            span,
        })
    }

    fn parse_factor(&mut self) -> Result<Value, ParseError> {
        let span = self.span();
        match self.peek().cloned() {
            Some(Tok::Minus) => {
                self.bump();
                let v = self.parse_factor()?;
                Ok(Value {
                    expr: v.expr.scale(&Coeff::from_int(-1)),
                    span: (span.0, v.span.1),
                })
            }
            Some(Tok::LParen) => {
                self.bump();
                let inner = self.parse_sum()?;
                let close = self.expect(Tok::RParen, "closing parenthesis")?;
                Ok(Value {
                    expr: inner.expr,
                    span: (span.0, close.span.1),
                })
            }
            Some(Tok::Int(digits)) => {
                self.bump();
                let n: BigInt = digits.parse().expect("digits");
                // INT "/" INT literal; otherwise a bare integer.
                if matches!(self.peek(), Some(Tok::Slash)) {
                    if let Some(SpannedTok { tok: Tok::Int(d2), .. }) =
                        self.toks.get(self.pos + 1).cloned()
                    {
                        self.bump();
                        let t2 = self.bump().unwrap();
                        let den: BigInt = d2.parse().expect("digits");
                        if den.is_zero() {
                            return Err(ParseError::new("zero denominator", t2.span));
                        }
                        let q = BigRational::new(n, den);
                        return Ok(Value {
                            expr: scalar_expr(Coeff::from_radical(
                                crate::coeff::Radical::from_rational(q),
                            )),
                            span: (span.0, t2.span.1),
                        });
                    }
                }
                Ok(Value {
                    expr: scalar_expr(Coeff::from_radical(
                        crate::coeff::Radical::from_rational(BigRational::from_integer(n)),
                    )),
                    span,
                })
            }
            Some(Tok::Ident(name)) => self.parse_named(&name),
            _ => Err(ParseError::new("expected a factor", span)),
        }
    }

    fn parse_named(&mut self, name: &str) -> Result<Value, ParseError> {
        let head = self.bump().unwrap();
        match name {
            "i" => {
                return Ok(Value {
                    expr: scalar_expr(Coeff::i()),
                    span: head.span,
                })
            }
            "sqrt2" => {
                return Ok(Value {
                    expr: scalar_expr(Coeff::sqrt2()),
                    span: head.span,
                })
            }
            "sqrt3" => {
                return Ok(Value {
                    expr: scalar_expr(Coeff::sqrt3()),
                    span: head.span,
                })
            }
            "D" | "Nabla" => {
                let indices = self.parse_idxgroup()?;
                let operand = self.parse_factor()?;
                let mut expr = operand.expr;
                for idx in indices.iter().rev() {
                    expr = covariant_derivative(&expr, idx, self.table)
                        .map_err(|e| ParseError::new(e.to_string(), head.span))?;
                }
                Ok(Value {
                    expr,
                    span: (head.span.0, operand.span.1),
                })
            }
            _ => {
                if let Some(id) = self.table.scalar_id(name) {
                    return Ok(Value {
                        expr: scalar_expr(Coeff::scalar(id)),
                        span: head.span,
                    });
                }
                let Some(sym) = self.table.tensor_id(name) else {
                    return Err(ParseError::new(
                        format!("unknown symbol `{name}`"),
                        head.span,
                    ));
                };
                let mut slots = Vec::new();
                let mut end = head.span.1;
                while matches!(self.peek(), Some(Tok::Under) | Some(Tok::Caret)) {
                    let group = self.parse_idxgroup()?;
                    end = self
                        .toks
                        .get(self.pos - 1)
                        .map(|t| t.span.1)
                        .unwrap_or(end);
                    slots.extend(group);
                }
                let decl = self.table.tensor(sym);
                if slots.len() != decl.rank {
                    return Err(ParseError::new(
                        format!(
                            "`{name}` carries {} indices, declared rank is {}",
                            slots.len(),
                            decl.rank
                        ),
                        (head.span.0, end),
                    ));
                }
                Ok(Value {
                    expr: Expr::from_terms(vec![Term {
                        coeff: Coeff::one(),
                        factors: vec![Factor::new(sym, slots)],
                    }]),
                    span: (head.span.0, end),
                })
            }
        }
    }

    fn parse_idxgroup(&mut self) -> Result<Vec<Index>, ParseError> {
        let variance = match self.peek() {
            Some(Tok::Under) => Variance::Lower,
            Some(Tok::Caret) => Variance::Upper,
            _ => return Err(ParseError::new("expected `_` or `^`", self.span())),
        };
        self.bump();
        self.expect(Tok::LBrace, "`{`")?;
        let mut out = Vec::new();
        loop {
            match self.bump() {
                Some(SpannedTok { tok: Tok::Ident(n), .. }) => out.push(Index {
                    name: n,
                    variance,
                }),
                Some(SpannedTok { tok: Tok::RBrace, span }) => {
                    if out.is_empty() {
                        return Err(ParseError::new("empty index group", span));
                    }
                    return Ok(out);
                }
                other => {
                    let span = other.map(|t| t.span).unwrap_or(self.span());
                    return Err(ParseError::new("expected index name or `}`", span));
                }
            }
        }
    }
}

fn scalar_expr(c: Coeff) -> Expr {
    Expr::from_terms(vec![Term::scalar(c)])
}

/// Parses an expression against a symbol table; the result passes
/// validation (free-index agreement across terms included).
pub fn parse_expr(input: &str, table: &SymbolTable) -> Result<Expr, ParseError> {
    let toks = lex(input)?;
    if toks.is_empty() {
        return Err(ParseError::new("empty expression", (0, 0)));
    }
    let mut p = Parser {
        toks,
        pos: 0,
        table,
        len: input.len(),
    };
    let v = p.parse_sum()?;
    if p.pos < p.toks.len() {
        return Err(ParseError::new("trailing input", p.span()));
    }
    crate::ir::validate(&v.expr, table).map_err(|e| ParseError::new(e.to_string(), v.span))?;
    // Drop literal zero terms so `0` parses to the empty sum.
    let expr = Expr::from_terms(
        v.expr
            .terms
            .into_iter()
            .filter(|t| !t.coeff.is_zero())
            .collect(),
    );
    Ok(expr)
}

fn group_indices(indices: &[Index]) -> String {
    let mut out = String::new();
    let mut k = 0;
    while k < indices.len() {
        let variance = indices[k].variance;
        let mut names = Vec::new();
        while k < indices.len() && indices[k].variance == variance {
            names.push(indices[k].name.clone());
            k += 1;
        }
        let sep = match variance {
            Variance::Upper => '^',
            Variance::Lower => '_',
        };
        out.push(sep);
        out.push('{');
        out.push_str(&names.join(" "));
        out.push('}');
    }
    out
}

fn coeff_prefix(c: &Coeff, table: &SymbolTable) -> (bool, String) {
    let names = |id| table.scalar_name(id).to_string();
    if let Some(r) = c.as_radical() {
        if let Some(q) = r.as_rational() {
            let neg = q < &BigRational::zero();
            let abs = if neg { -q.clone() } else { q.clone() };
            if abs.is_one() {
                return (neg, String::new());
            }
            if abs.denom().is_one() {
                return (neg, abs.numer().to_string());
            }
            return (neg, format!("({}/{})", abs.numer(), abs.denom()));
        }
        let s = r.to_string();
        if let Some(rest) = s.strip_prefix('-') {
            if !rest.contains('+') && !rest.contains('-') {
                return (true, rest.to_string());
            }
        } else if !s.contains('+') && !s.contains('-') {
            return (false, s);
        }
        return (false, format!("({s})"));
    }
    (false, format!("({})", c.display(&names)))
}

/// Deterministic text rendering; `parse_expr(print_expr(e))` is
/// canonically equal to `e`.
pub fn print_expr(expr: &Expr, table: &SymbolTable) -> String {
    if expr.terms.is_empty() {
        return "0".to_string();
    }
    let mut rendered = Vec::new();
    for term in &expr.terms {
        let (neg, coeff) = coeff_prefix(&term.coeff, table);
        let mut pieces: Vec<String> = Vec::new();
        if !coeff.is_empty() {
            pieces.push(coeff);
        }
        for f in &term.factors {
            let mut s = String::new();
            for d in &f.derivs {
                s.push('D');
                s.push_str(&group_indices(std::slice::from_ref(d)));
                s.push(' ');
            }
            s.push_str(&table.tensor(f.sym).name);
            s.push_str(&group_indices(&f.slots));
            pieces.push(s);
        }
        let body = if pieces.is_empty() {
            "1".to_string()
        } else {
            pieces.join("*")
        };
        rendered.push((neg, body));
    }
    let mut out = String::new();
    for (k, (neg, body)) in rendered.iter().enumerate() {
        if k == 0 {
            if *neg {
                out.push('-');
            }
        } else if *neg {
            out.push_str(" - ");
        } else {
            out.push_str(" + ");
        }
        out.push_str(body);
    }
    out
}

/// One parsed `tensor` declaration line.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorDeclSpec {
    pub name: String,
    pub rank: usize,
    pub symmetries: Vec<SignedPerm>,
    pub traceless: Vec<(usize, usize)>,
    pub cyclic: Option<[usize; 3]>,
    pub charged: bool,
    pub role: Role,
}

impl TensorDeclSpec {
    pub fn declare(&self, table: &mut SymbolTable) -> Result<(), IrError> {
        let charge = if self.charged {
            BigRational::one()
        } else {
            BigRational::zero()
        };
        table
            .declare_tensor_full(
                &self.name,
                self.rank,
                self.symmetries.clone(),
                self.traceless.clone(),
                self.cyclic,
                charge,
                self.role,
            )
            .map(|_| ())
    }
}

fn split_top_level(args: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut cur = String::new();
    for ch in args.chars() {
        match ch {
            '(' => {
                depth += 1;
                cur.push(ch);
            }
            ')' => {
                depth -= 1;
                cur.push(ch);
            }
            c if c.is_whitespace() && depth == 0 => {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
            }
            c => cur.push(c),
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn parse_perm_list(body: &str, offset: usize) -> Result<Vec<SignedPerm>, ParseError> {
    let mut out = Vec::new();
    let mut rest = body.trim();
    while !rest.is_empty() {
        let sign = if let Some(r) = rest.strip_prefix('+') {
            rest = r.trim_start();
            1
        } else if let Some(r) = rest.strip_prefix('-') {
            rest = r.trim_start();
            -1
        } else {
            1
        };
        let Some(r) = rest.strip_prefix('(') else {
            return Err(ParseError::new(
                "expected `(` in symmetry list",
                (offset, offset + 1),
            ));
        };
        let Some(close) = r.find(')') else {
            return Err(ParseError::new(
                "unclosed `(` in symmetry list",
                (offset, offset + 1),
            ));
        };
        let inner = &r[..close];
        let perm: Result<Vec<u8>, _> = inner
            .split_whitespace()
            .map(|t| t.parse::<u8>().map(|v| v.saturating_sub(1)))
            .collect();
        let perm = perm.map_err(|_| {
            ParseError::new("symmetry entries must be slot numbers", (offset, offset + 1))
        })?;
        out.push(SignedPerm { perm, sign });
        rest = r[close + 1..].trim_start().trim_start_matches(',').trim_start();
    }
    Ok(out)
}

fn parse_pair_list(body: &str, offset: usize) -> Result<Vec<(usize, usize)>, ParseError> {
    let mut out = Vec::new();
    let mut rest = body.trim();
    while !rest.is_empty() {
        let Some(r) = rest.strip_prefix('(') else {
            return Err(ParseError::new(
                "expected `(` in pair list",
                (offset, offset + 1),
            ));
        };
        let Some(close) = r.find(')') else {
            return Err(ParseError::new("unclosed `(`", (offset, offset + 1)));
        };
        let nums: Result<Vec<usize>, _> =
            r[..close].split_whitespace().map(|t| t.parse::<usize>()).collect();
        let nums = nums
            .map_err(|_| ParseError::new("pair entries must be slot numbers", (offset, offset + 1)))?;
        if nums.len() != 2 {
            return Err(ParseError::new("pairs need two slots", (offset, offset + 1)));
        }
        out.push((nums[0] - 1, nums[1] - 1));
        rest = r[close + 1..].trim_start().trim_start_matches(',').trim_start();
    }
    Ok(out)
}

/// Parses `tensor NAME rank=N [sym=(...)] [traceless=(...)]
/// [cyclic=(...)] [charge=0|e] [role=...]`.
pub fn parse_tensor_decl(args: &str, offset: usize) -> Result<TensorDeclSpec, ParseError> {
    let parts = split_top_level(args);
    if parts.is_empty() {
        return Err(ParseError::new("missing tensor name", (offset, offset + 1)));
    }
    let name = parts[0].clone();
    let mut rank = None;
    let mut symmetries = Vec::new();
    let mut traceless = Vec::new();
    let mut cyclic = None;
    let mut charged = false;
    let mut role = Role::None;
    for p in &parts[1..] {
        let Some((key, value)) = p.split_once('=') else {
            return Err(ParseError::new(
                format!("expected key=value, got `{p}`"),
                (offset, offset + args.len()),
            ));
        };
        // Remove exactly one pair of surrounding parentheses.
        fn strip(v: &str) -> &str {
            v.strip_prefix('(')
                .and_then(|r| r.strip_suffix(')'))
                .unwrap_or(v)
        }
        match key {
            "rank" => {
                rank = Some(value.parse::<usize>().map_err(|_| {
                    ParseError::new("rank must be a number", (offset, offset + args.len()))
                })?)
            }
            "sym" => symmetries = parse_perm_list(strip(value), offset)?,
            "traceless" => traceless = parse_pair_list(strip(value), offset)?,
            "cyclic" => {
                let nums: Result<Vec<usize>, _> =
                    strip(value).split_whitespace().map(|t| t.parse::<usize>()).collect();
                let nums = nums.map_err(|_| {
                    ParseError::new("cyclic entries must be slot numbers", (offset, offset + 1))
                })?;
                if nums.len() != 3 {
                    return Err(ParseError::new(
                        "cyclic takes three slots",
                        (offset, offset + 1),
                    ));
                }
                cyclic = Some([nums[0] - 1, nums[1] - 1, nums[2] - 1]);
            }
            "charge" => match value {
                "0" => charged = false,
                "e" => charged = true,
                other => {
                    return Err(ParseError::new(
                        format!("charge must be 0 or e, got `{other}`"),
                        (offset, offset + args.len()),
                    ))
                }
            },
            "role" => {
                role = match value {
                    "metric" => Role::Metric,
                    "riemann" => Role::Riemann,
                    "ricci" => Role::Ricci,
                    "field_strength" => Role::FieldStrength,
                    "none" => Role::None,
                    other => {
                        return Err(ParseError::new(
                            format!("unknown role `{other}`"),
                            (offset, offset + args.len()),
                        ))
                    }
                }
            }
            other => {
                return Err(ParseError::new(
                    format!("unknown declaration key `{other}`"),
                    (offset, offset + args.len()),
                ))
            }
        }
    }
    let Some(rank) = rank else {
        return Err(ParseError::new(
            "tensor declaration needs rank=N",
            (offset, offset + args.len()),
        ));
    };
    Ok(TensorDeclSpec {
        name,
        rank,
        symmetries,
        traceless,
        cyclic,
        charged,
        role,
    })
}

/// Parses a declaration file: `tensor ...` and `scalar NAME...` lines,
/// `#` comments.
pub fn parse_declarations(input: &str, table: &mut SymbolTable) -> Result<(), ParseError> {
    let mut offset = 0usize;
    for line in input.lines() {
        let line_offset = offset;
        offset += line.len() + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (cmd, rest) = trimmed.split_once(char::is_whitespace).unwrap_or((trimmed, ""));
        match cmd {
            "tensor" => {
                let spec = parse_tensor_decl(rest, line_offset)?;
                spec.declare(table)
                    .map_err(|e| ParseError::new(e.to_string(), (line_offset, line_offset + line.len())))?;
            }
            "scalar" | "scalars" => {
                for name in rest.split_whitespace() {
                    table.declare_scalar(name).map_err(|e| {
                        ParseError::new(e.to_string(), (line_offset, line_offset + line.len()))
                    })?;
                }
            }
            other => {
                return Err(ParseError::new(
                    format!("unknown declaration `{other}`"),
                    (line_offset, line_offset + line.len()),
                ))
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canon::{canonical_eq, canonicalize, is_zero};

    fn table() -> SymbolTable {
        let mut t = SymbolTable::with_geometry(4);
        parse_declarations(
            "tensor Phi rank=1 charge=e\n\
             tensor Psi rank=0 charge=e\n\
             tensor B rank=1 charge=e\n\
             tensor A rank=1\n\
             tensor Bn rank=1\n",
            &mut t,
        )
        .unwrap();
        t
    }

    #[test]
    fn antisymmetric_sum_parses_to_zero() {
        let t = table();
        let e = parse_expr("F_{b a} + F_{a b}", &t).unwrap();
        assert!(is_zero(&e, &t).unwrap());
    }

    #[test]
    fn wave_equation_lhs() {
        let t = table();
        let e = parse_expr("2*D^{a} B_{a} + i*M*Psi", &t).unwrap();
        assert_eq!(e.terms.len(), 2);
        let printed = print_expr(&canonicalize(&e, &t).unwrap().expr(), &t);
        let back = parse_expr(&printed, &t).unwrap();
        assert!(canonical_eq(&e, &back, &t).unwrap());
    }

    #[test]
    fn same_variance_pair_errors_with_span() {
        let t = table();
        let err = parse_expr("A_{a} Bn_{a}", &t).unwrap_err();
        assert!(err.span.1 <= "A_{a} Bn_{a}".len());
        assert!(err.message.contains("same variance"));
    }

    #[test]
    fn unknown_symbol_errors() {
        let t = table();
        let err = parse_expr("Qx_{a}", &t).unwrap_err();
        assert!(err.message.contains("unknown symbol"));
        assert_eq!(err.span.0, 0);
    }

    #[test]
    fn print_matches_expected_shape() {
        let t = table();
        let e = parse_expr("-(1/2)*g_{a b}*D^{c} Phi_{c}", &t).unwrap();
        let c = canonicalize(&e, &t).unwrap();
        assert_eq!(print_expr(c.expr(), &t), "-(1/2)*g_{a b}*D^{c} Phi_{c}");
    }

    #[test]
    fn division_by_scalar_subexpression() {
        let t = table();
        let e = parse_expr("(2/(i*M))*Psi", &t).unwrap();
        let m = t.scalar_id("M").unwrap();
        let want = Coeff::from_int(2)
            .div(&Coeff::i().mul(&Coeff::scalar(m)));
        assert_eq!(e.terms[0].coeff, want);
        let err = parse_expr("Psi/Phi_{a}", &t).unwrap_err();
        assert!(err.message.contains("scalar divisor"));
    }

    #[test]
    fn derivative_group_distributes() {
        let t = table();
        let e = parse_expr("D_{a} (A_{b} Bn_{c})", &t).unwrap();
        let want = parse_expr("D_{a} A_{b} * Bn_{c} + A_{b} * D_{a} Bn_{c}", &t).unwrap();
        assert!(canonical_eq(&e, &want, &t).unwrap());
        let zero = parse_expr("D_{a} g_{b c}", &t).unwrap();
        assert!(zero.is_zero_literal());
    }

    #[test]
    fn declaration_roundtrip() {
        let spec = parse_tensor_decl(
            "T rank=4 sym=(-(2 1 3 4), +(3 4 1 2)) traceless=((1 3)) charge=e role=none",
            0,
        )
        .unwrap();
        assert_eq!(spec.rank, 4);
        assert_eq!(spec.symmetries.len(), 2);
        assert_eq!(spec.symmetries[0].sign, -1);
        assert_eq!(spec.traceless, vec![(0, 2)]);
        assert!(spec.charged);
    }
}
