//! Exact numeric confirmation of symbolic identities.
//!
//! Geometry, field values, and derivative jets are instantiated with
//! pseudorandom exact rationals (complex parts for charged fields).
//! First derivatives are unconstrained; the antisymmetric part of each
//! second-derivative jet is pinned to the commutator rule, so any
//! identity that follows from the rule must evaluate to exactly zero
//! component by component. Pass/fail is exact equality, never a
//! tolerance.

use crate::coeff::{EvalError, Radical, ScalarId};
use crate::ir::{Expr, Index, Role, SymId, SymbolTable, Variance, METRIC};
use num_rational::BigRational;
use num_traits::Zero;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{HashMap, HashSet};
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("dimension must be at least 2, got {0}")]
    DimensionTooSmall(usize),
    #[error("could not draw an invertible metric after {0} attempts")]
    SingularMetric(usize),
    #[error("factor of `{0}` carries {1} derivatives, jets support at most 2")]
    DepthExceeded(String, usize),
    #[error("no jet data for geometry symbol `{0}` under a derivative")]
    DerivativeOfGeometry(String),
    #[error("no jets sampled for `{0}`")]
    MissingField(String),
    #[error("coefficient evaluation failed: {0}")]
    Coeff(String),
    #[error("projection onto the declared symmetry class failed for `{0}`")]
    ProjectionFailed(String),
}

impl From<EvalError> for OracleError {
    fn from(e: EvalError) -> Self {
        OracleError::Coeff(e.to_string())
    }
}

/// Dense exact component array of a fixed rank in dimension `d`.
#[derive(Clone, Debug, PartialEq)]
pub struct Components {
    pub d: usize,
    pub rank: usize,
    data: Vec<Radical>,
}

impl Components {
    pub fn zeros(d: usize, rank: usize) -> Components {
        Components {
            d,
            rank,
            data: vec![Radical::zero(); d.pow(rank as u32)],
        }
    }

    fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.rank);
        idx.iter().fold(0, |acc, &i| acc * self.d + i)
    }

    pub fn get(&self, idx: &[usize]) -> &Radical {
        &self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: Radical) {
        let o = self.offset(idx);
        self.data[o] = v;
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| v.is_zero())
    }

    fn map_indexed(&self, f: impl Fn(&[usize], &Radical) -> Radical) -> Components {
        let mut out = Components::zeros(self.d, self.rank);
        for idx in MultiIndex::new(self.d, self.rank) {
            out.set(&idx, f(&idx, self.get(&idx)));
        }
        out
    }
}

/// Odometer over all index tuples of a given rank.
pub struct MultiIndex {
    d: usize,
    rank: usize,
    next: Option<Vec<usize>>,
}

impl MultiIndex {
    pub fn new(d: usize, rank: usize) -> MultiIndex {
        MultiIndex {
            d,
            rank,
            next: Some(vec![0; rank]),
        }
    }
}

impl Iterator for MultiIndex {
    type Item = Vec<usize>;
    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.next.clone()?;
        let mut bump = current.clone();
        let mut k = self.rank;
        loop {
            if k == 0 {
                self.next = None;
                break;
            }
            k -= 1;
            bump[k] += 1;
            if bump[k] < self.d {
                self.next = Some(bump);
                break;
            }
            bump[k] = 0;
        }
        Some(current)
    }
}

fn random_rational(rng: &mut ChaCha8Rng) -> BigRational {
    let num: i64 = rng.random_range(-4..=4);
    let den: i64 = rng.random_range(1..=3);
    BigRational::new(num.into(), den.into())
}

fn random_nonzero_rational(rng: &mut ChaCha8Rng) -> BigRational {
    loop {
        let q = random_rational(rng);
        if !q.is_zero() {
            return q;
        }
    }
}

fn random_value(rng: &mut ChaCha8Rng, complex: bool) -> Radical {
    let re = Radical::from_rational(random_rational(rng));
    if complex {
        re + Radical::i() * Radical::from_rational(random_rational(rng))
    } else {
        re
    }
}

/// Exact metric, curvature, and field-strength components.
#[derive(Clone, Debug)]
pub struct GeometrySample {
    pub d: usize,
    pub metric: Components,
    pub metric_inv: Components,
    pub riemann: Components,
    pub ricci: Components,
    pub field: Components,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SampleMode {
    /// Flat neutral background: diagonal metric, zero curvature and
    /// field strength.
    pub flat: bool,
    /// Skip the cyclic (first Bianchi) projection of the curvature.
    pub no_cyclic: bool,
}

fn invert(m: &Components) -> Option<Components> {
    let d = m.d;
    let mut a: Vec<Vec<Radical>> = (0..d)
        .map(|r| (0..d).map(|c| m.get(&[r, c]).clone()).collect())
        .collect();
    let mut inv: Vec<Vec<Radical>> = (0..d)
        .map(|r| {
            (0..d)
                .map(|c| {
                    if r == c {
                        Radical::one()
                    } else {
                        Radical::zero()
                    }
                })
                .collect()
        })
        .collect();
    for col in 0..d {
        let pivot = (col..d).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let p = a[col][col].clone().inv();
        for c in 0..d {
            a[col][c] = a[col][c].clone() * p.clone();
            inv[col][c] = inv[col][c].clone() * p.clone();
        }
        for r in 0..d {
            if r == col || a[r][col].is_zero() {
                continue;
            }
            let f = a[r][col].clone();
            for c in 0..d {
                let av = a[col][c].clone() * f.clone();
                a[r][c] -= &av;
                let iv = inv[col][c].clone() * f.clone();
                inv[r][c] -= &iv;
            }
        }
    }
    let mut out = Components::zeros(d, 2);
    for r in 0..d {
        for c in 0..d {
            out.set(&[r, c], inv[r][c].clone());
        }
    }
    Some(out)
}

fn swap_axes(t: &Components, i: usize, j: usize) -> Components {
    t.map_indexed(|idx, _| {
        let mut src = idx.to_vec();
        src.swap(i, j);
        t.get(&src).clone()
    })
}

fn ricci_contraction(riemann: &Components, ginv: &Components) -> Components {
    let d = riemann.d;
    let mut out = Components::zeros(d, 2);
    for a in 0..d {
        for b in 0..d {
            let mut acc = Radical::zero();
            for x in 0..d {
                for y in 0..d {
                    acc += &(ginv.get(&[x, y]) * riemann.get(&[x, a, y, b]));
                }
            }
            out.set(&[a, b], acc);
        }
    }
    out
}

const METRIC_ATTEMPTS: usize = 24;

/// Draws a pseudorandom exact geometry; deterministic per seed.
pub fn sample_geometry(
    rng: &mut ChaCha8Rng,
    d: usize,
    mode: SampleMode,
) -> Result<GeometrySample, OracleError> {
    if d < 2 {
        return Err(OracleError::DimensionTooSmall(d));
    }
    if mode.flat {
        let mut metric = Components::zeros(d, 2);
        metric.set(&[0, 0], Radical::one());
        for k in 1..d {
            metric.set(&[k, k], -Radical::one());
        }
        let metric_inv = invert(&metric).expect("diagonal");
        return Ok(GeometrySample {
            d,
            metric: metric.clone(),
            metric_inv,
            riemann: Components::zeros(d, 4),
            ricci: Components::zeros(d, 2),
            field: Components::zeros(d, 2),
        });
    }
    let mut metric = None;
    for _ in 0..METRIC_ATTEMPTS {
        let mut g = Components::zeros(d, 2);
        for a in 0..d {
            for b in a..d {
                let v = Radical::from_rational(random_rational(rng));
                g.set(&[a, b], v.clone());
                g.set(&[b, a], v);
            }
        }
        if let Some(ginv) = invert(&g) {
            metric = Some((g, ginv));
            break;
        }
    }
    let Some((metric, metric_inv)) = metric else {
        return Err(OracleError::SingularMetric(METRIC_ATTEMPTS));
    };

    // Random four-index array projected onto the curvature class.
    let mut t = Components::zeros(d, 4);
    for idx in MultiIndex::new(d, 4) {
        t.set(&idx, Radical::from_rational(random_rational(rng)));
    }
    let half = Radical::from_ratio(1, 2);
    let anti01 = t.map_indexed(|idx, v| {
        (v.clone() - swap_axes(&t, 0, 1).get(idx).clone()) * half.clone()
    });
    // Recompute swaps against the updated array at each stage.
    let s = anti01;
    let anti23 = s.map_indexed(|idx, v| {
        (v.clone() - swap_axes(&s, 2, 3).get(idx).clone()) * half.clone()
    });
    let s = anti23;
    let pair_swapped = s.map_indexed(|idx, _| {
        let src = [idx[2], idx[3], idx[0], idx[1]];
        s.get(&src).clone()
    });
    let mut riemann = s.map_indexed(|idx, v| {
        (v.clone() + pair_swapped.get(idx).clone()) * half.clone()
    });
    if !mode.no_cyclic {
        let third = Radical::from_ratio(1, 3);
        let r = riemann.clone();
        riemann = r.map_indexed(|idx, v| {
            let c1 = r.get(&[idx[0], idx[2], idx[3], idx[1]]).clone();
            let c2 = r.get(&[idx[0], idx[3], idx[1], idx[2]]).clone();
            v.clone() - (v.clone() + c1 + c2) * third.clone()
        });
    }
    let ricci = ricci_contraction(&riemann, &metric_inv);

    let mut field = Components::zeros(d, 2);
    for a in 0..d {
        for b in (a + 1)..d {
            let v = Radical::from_rational(random_rational(rng));
            field.set(&[a, b], v.clone());
            field.set(&[b, a], -v);
        }
    }

    let sample = GeometrySample {
        d,
        metric,
        metric_inv,
        riemann,
        ricci,
        field,
    };
    verify_geometry(&sample, mode)?;
    Ok(sample)
}

/// Exact checks of every declared property of the sample.
fn verify_geometry(s: &GeometrySample, mode: SampleMode) -> Result<(), OracleError> {
    let d = s.d;
    // g * g^{-1} = id
    for a in 0..d {
        for b in 0..d {
            let mut acc = Radical::zero();
            for x in 0..d {
                acc += &(s.metric.get(&[a, x]) * s.metric_inv.get(&[x, b]));
            }
            let want = if a == b { Radical::one() } else { Radical::zero() };
            if acc != want {
                return Err(OracleError::ProjectionFailed("metric inverse".into()));
            }
        }
    }
    for idx in MultiIndex::new(d, 4) {
        let v = s.riemann.get(&idx);
        let sw01 = s.riemann.get(&[idx[1], idx[0], idx[2], idx[3]]);
        let sw23 = s.riemann.get(&[idx[0], idx[1], idx[3], idx[2]]);
        let pair = s.riemann.get(&[idx[2], idx[3], idx[0], idx[1]]);
        if *sw01 != -v.clone() || *sw23 != -v.clone() || pair != v {
            return Err(OracleError::ProjectionFailed("curvature symmetries".into()));
        }
        if !mode.no_cyclic {
            let c1 = s.riemann.get(&[idx[0], idx[2], idx[3], idx[1]]);
            let c2 = s.riemann.get(&[idx[0], idx[3], idx[1], idx[2]]);
            let sum = v.clone() + c1.clone() + c2.clone();
            if !sum.is_zero() {
                return Err(OracleError::ProjectionFailed("cyclic identity".into()));
            }
        }
    }
    let ric = ricci_contraction(&s.riemann, &s.metric_inv);
    if ric != s.ricci {
        return Err(OracleError::ProjectionFailed("ricci contraction".into()));
    }
    Ok(())
}

/// Value, first-, and second-derivative components of one field.
#[derive(Clone, Debug)]
pub struct FieldJets {
    pub value: Components,
    pub j1: Components,
    pub j2: Components,
}

#[derive(Clone, Debug, Default)]
pub struct JetSample {
    pub fields: HashMap<SymId, FieldJets>,
}

/// Group-average followed by traceless subtraction on the trailing
/// `rank` axes; `lead` axes ride along untouched.
fn project_slots(
    t: &Components,
    lead: usize,
    sym: &crate::ir::TensorSymbol,
    geom: &GeometrySample,
) -> Result<Components, OracleError> {
    let rank = sym.rank;
    let d = t.d;
    let mut out = t.clone();
    if !sym.group.is_empty() && sym.group.len() > 1 {
        let inv_n = Radical::from_ratio(1, sym.group.len() as i64);
        let src = out.clone();
        out = out.map_indexed(|idx, _| {
            let mut acc = Radical::zero();
            for elem in &sym.group {
                // Slot k of the image sits at position perm[k].
                let mut s = idx.to_vec();
                for k in 0..rank {
                    s[lead + elem.perm[k] as usize] = idx[lead + k];
                }
                let mut v = src.get(&s).clone();
                if elem.sign < 0 {
                    v = -v;
                }
                acc += &v;
            }
            acc * inv_n.clone()
        });
    }
    if !sym.traceless_pairs.is_empty() {
        out = match (rank, sym.traceless_pairs.as_slice()) {
            (2, [(0, 1)]) | (2, [(1, 0)]) => {
                let src = out.clone();
                let dd = Radical::from_ratio(1, d as i64);
                // tr[lead] = g^{xy} T[lead, x, y]
                let mut tr = Components::zeros(d, lead);
                for lidx in MultiIndex::new(d, lead) {
                    let mut acc = Radical::zero();
                    for x in 0..d {
                        for y in 0..d {
                            let mut full = lidx.clone();
                            full.push(x);
                            full.push(y);
                            acc += &(geom.metric_inv.get(&[x, y]) * src.get(&full));
                        }
                    }
                    tr.set(&lidx, acc);
                }
                src.map_indexed(|idx, v| {
                    let (l, s) = idx.split_at(lead);
                    v.clone()
                        - geom.metric.get(&[s[0], s[1]]).clone()
                            * tr.get(l).clone()
                            * dd.clone()
                })
            }
            (3, pairs) if pairs.len() >= 2 => {
                let src = out.clone();
                let coeff = Radical::from_ratio(1, (d + 2) as i64);
                // t[lead, c] = g^{xy} T[lead, x, y, c] (fully symmetric slots)
                let mut tr = Components::zeros(d, lead + 1);
                for lidx in MultiIndex::new(d, lead + 1) {
                    let mut acc = Radical::zero();
                    let (l, c) = lidx.split_at(lead);
                    for x in 0..d {
                        for y in 0..d {
                            let mut full = l.to_vec();
                            full.push(x);
                            full.push(y);
                            full.push(c[0]);
                            acc += &(geom.metric_inv.get(&[x, y]) * src.get(&full));
                        }
                    }
                    tr.set(&lidx, acc);
                }
                src.map_indexed(|idx, v| {
                    let (l, s) = idx.split_at(lead);
                    let mut correction = Radical::zero();
                    for (i, j, k) in [(0, 1, 2), (2, 0, 1), (1, 2, 0)] {
                        let mut tidx = l.to_vec();
                        tidx.push(s[k]);
                        correction += &(geom.metric.get(&[s[i], s[j]]).clone()
                            * tr.get(&tidx).clone());
                    }
                    v.clone() - correction * coeff.clone()
                })
            }
            _ => return Err(OracleError::ProjectionFailed(sym.name.clone())),
        };
    }
    if let Some(tri) = sym.cyclic_zero {
        let src = out.clone();
        let third = Radical::from_ratio(1, 3);
        out = src.map_indexed(|idx, v| {
            let (l, s) = idx.split_at(lead);
            let cyc = |order: [usize; 3]| {
                let mut t2 = idx.to_vec();
                t2[lead + tri[0]] = s[tri[order[0]]];
                t2[lead + tri[1]] = s[tri[order[1]]];
                t2[lead + tri[2]] = s[tri[order[2]]];
                let _ = l;
                src.get(&t2).clone()
            };
            v.clone() - (cyc([0, 1, 2]) + cyc([1, 2, 0]) + cyc([2, 0, 1])) * third.clone()
        });
    }
    // Exactness gate: every declared property must hold on the nose.
    for elem in &sym.group {
        for idx in MultiIndex::new(d, lead + rank) {
            let mut s = idx.clone();
            for k in 0..rank {
                s[lead + elem.perm[k] as usize] = idx[lead + k];
            }
            let mut expect = out.get(&idx).clone();
            if elem.sign < 0 {
                expect = -expect;
            }
            if *out.get(&s) != expect {
                return Err(OracleError::ProjectionFailed(sym.name.clone()));
            }
        }
    }
    for &(i, j) in &sym.traceless_pairs {
        for lidx in MultiIndex::new(d, lead + rank - 2) {
            let mut acc = Radical::zero();
            for x in 0..d {
                for y in 0..d {
                    let mut full = lidx.clone();
                    let mut slot_vals = vec![0usize; rank];
                    let rest: Vec<usize> = lidx[lead..].to_vec();
                    let mut rit = rest.into_iter();
                    for (k, sv) in slot_vals.iter_mut().enumerate() {
                        if k == i {
                            *sv = x;
                        } else if k == j {
                            *sv = y;
                        } else {
                            *sv = rit.next().unwrap();
                        }
                    }
                    full.truncate(lead);
                    full.extend(slot_vals);
                    acc += &(geom.metric_inv.get(&[x, y]) * out.get(&full));
                }
            }
            if !acc.is_zero() {
                return Err(OracleError::ProjectionFailed(sym.name.clone()));
            }
        }
    }
    Ok(out)
}

/// Commutator array `[D_x, D_y] T` computed directly from the geometry
/// and the (projected) field values.
fn commutator_array(
    sym: &crate::ir::TensorSymbol,
    value: &Components,
    geom: &GeometrySample,
    e_val: &Radical,
) -> Components {
    let d = geom.d;
    let rank = sym.rank;
    let mut out = Components::zeros(d, rank + 2);
    let gauge = if sym.charge.is_zero() {
        None
    } else {
        Some(Radical::i() * Radical::from_rational(sym.charge.clone()) * e_val.clone())
    };
    for idx in MultiIndex::new(d, rank + 2) {
        let (xy, slots) = idx.split_at(2);
        let (x, y) = (xy[0], xy[1]);
        let mut acc = Radical::zero();
        for (k, &sk) in slots.iter().enumerate() {
            // -R^{n}_{s_k x y} T(s_k -> n)
            for n in 0..d {
                let mut rup = Radical::zero();
                for m in 0..d {
                    rup += &(geom.metric_inv.get(&[n, m]) * geom.riemann.get(&[m, sk, x, y]));
                }
                if rup.is_zero() {
                    continue;
                }
                let mut tidx = slots.to_vec();
                tidx[k] = n;
                acc -= &(rup * value.get(&tidx).clone());
            }
        }
        if let Some(g) = &gauge {
            acc += &(g.clone() * geom.field.get(&[x, y]).clone() * value.get(slots).clone());
        }
        out.set(&idx, acc);
    }
    out
}

/// Samples values and first/second jets for the given fields. The
/// symmetric part of each second jet is free; the antisymmetric part is
/// the commutator rule applied to the value.
pub fn sample_jets(
    rng: &mut ChaCha8Rng,
    fields: &[SymId],
    table: &SymbolTable,
    geom: &GeometrySample,
    e_val: &Radical,
) -> Result<JetSample, OracleError> {
    let d = geom.d;
    let mut out = JetSample::default();
    for &sym_id in fields {
        let sym = table.tensor(sym_id);
        if sym.role != Role::None {
            continue;
        }
        let complex = !sym.charge.is_zero();
        let rank = sym.rank;
        let mut raw = Components::zeros(d, rank);
        for idx in MultiIndex::new(d, rank) {
            raw.set(&idx, random_value(rng, complex));
        }
        let value = project_slots(&raw, 0, sym, geom)?;

        let mut raw1 = Components::zeros(d, rank + 1);
        for idx in MultiIndex::new(d, rank + 1) {
            raw1.set(&idx, random_value(rng, complex));
        }
        let j1 = project_slots(&raw1, 1, sym, geom)?;

        let mut raw2 = Components::zeros(d, rank + 2);
        for idx in MultiIndex::new(d, rank + 2) {
            raw2.set(&idx, random_value(rng, complex));
        }
        // Symmetric part in the two derivative axes.
        let sym_part = raw2.map_indexed(|idx, v| {
            let mut sw = idx.to_vec();
            sw.swap(0, 1);
            (v.clone() + raw2.get(&sw).clone()) * Radical::from_ratio(1, 2)
        });
        let sym_part = project_slots(&sym_part, 2, sym, geom)?;
        let comm = commutator_array(sym, &value, geom, e_val);
        let comm = project_slots(&comm, 2, sym, geom)?;
        let j2 = sym_part.map_indexed(|idx, v| {
            v.clone() + comm.get(idx).clone() * Radical::from_ratio(1, 2)
        });
        out.fields.insert(
            sym_id,
            FieldJets {
                value,
                j1,
                j2,
            },
        );
    }
    Ok(out)
}

/// Rewrites upper indices on non-metric factors into explicit inverse
/// metric contractions so every jet lookup is all-lower.
fn lower_all(expr: &Expr) -> Expr {
    let mut out = Expr::zero();
    for term in &expr.terms {
        let mut used: HashSet<String> =
            term.indices().map(|i| i.name.clone()).collect();
        let mut fresh = 0usize;
        let mut next_fresh = || loop {
            let name = format!("q{fresh}");
            fresh += 1;
            if !used.contains(&name) {
                used.insert(name.clone());
                return name;
            }
        };
        let mut extra = Vec::new();
        let mut factors = Vec::new();
        for f in &term.factors {
            if f.sym == METRIC {
                factors.push(f.clone());
                continue;
            }
            let mut nf = f.clone();
            for idx in nf.derivs.iter_mut().chain(nf.slots.iter_mut()) {
                if idx.variance == Variance::Upper {
                    let m = next_fresh();
                    extra.push(crate::ir::Factor::new(
                        METRIC,
                        vec![Index::upper(&idx.name), Index::upper(&m)],
                    ));
                    *idx = Index::lower(&m);
                }
            }
            factors.push(nf);
        }
        factors.extend(extra);
        out.terms.push(crate::ir::Term {
            coeff: term.coeff.clone(),
            factors,
        });
    }
    out
}

/// Exact evaluation of an expression: a map from assignments of the
/// free indices to field values.
pub struct Evaluation {
    pub free: Vec<Index>,
    pub values: HashMap<Vec<usize>, Radical>,
}

impl Evaluation {
    pub fn all_zero(&self) -> bool {
        self.values.values().all(|v| v.is_zero())
    }

    pub fn witness(&self) -> Option<(Vec<usize>, &Radical)> {
        self.values
            .iter()
            .filter(|(_, v)| !v.is_zero())
            .min_by_key(|(k, _)| (*k).clone())
            .map(|(k, v)| (k.clone(), v))
    }
}

pub fn eval_expr(
    expr: &Expr,
    table: &SymbolTable,
    geom: &GeometrySample,
    jets: &JetSample,
    env: &HashMap<ScalarId, Radical>,
) -> Result<Evaluation, OracleError> {
    let d = geom.d;
    let free = expr.free_indices();
    let lowered = lower_all(expr);
    let mut values: HashMap<Vec<usize>, Radical> = HashMap::new();
    for fa in MultiIndex::new(d, free.len()) {
        values.insert(fa, Radical::zero());
    }
    for term in &lowered.terms {
        let coeff_val = term.coeff.eval(env)?;
        if coeff_val.is_zero() {
            continue;
        }
        // Name -> role in this term.
        let mut names: Vec<String> = Vec::new();
        for f in &term.factors {
            for idx in f.indices() {
                if !names.contains(&idx.name) {
                    names.push(idx.name.clone());
                }
            }
        }
        let free_names: Vec<String> = free.iter().map(|i| i.name.clone()).collect();
        let dummy_names: Vec<String> = names
            .iter()
            .filter(|n| !free_names.contains(n))
            .cloned()
            .collect();
        for fa in MultiIndex::new(d, free.len()) {
            let mut assignment: HashMap<&str, usize> = HashMap::new();
            for (i, n) in free_names.iter().enumerate() {
                assignment.insert(n.as_str(), fa[i]);
            }
            let mut total = Radical::zero();
            for da in MultiIndex::new(d, dummy_names.len()) {
                for (i, n) in dummy_names.iter().enumerate() {
                    assignment.insert(n.as_str(), da[i]);
                }
                let mut prod = coeff_val.clone();
                for f in &term.factors {
                    let v = eval_factor(f, table, geom, jets, &assignment)?;
                    if v.is_zero() {
                        prod = Radical::zero();
                        break;
                    }
                    prod *= &v;
                }
                total += &prod;
            }
            *values.get_mut(&fa).unwrap() += &total;
        }
    }
    Ok(Evaluation { free, values })
}

fn eval_factor(
    f: &crate::ir::Factor,
    table: &SymbolTable,
    geom: &GeometrySample,
    jets: &JetSample,
    assignment: &HashMap<&str, usize>,
) -> Result<Radical, OracleError> {
    let decl = table.tensor(f.sym);
    let slot_vals: Vec<usize> = f.slots.iter().map(|i| assignment[i.name.as_str()]).collect();
    if decl.role == Role::Metric {
        let (a, b) = (slot_vals[0], slot_vals[1]);
        let v = match (f.slots[0].variance, f.slots[1].variance) {
            (Variance::Lower, Variance::Lower) => geom.metric.get(&[a, b]).clone(),
            (Variance::Upper, Variance::Upper) => geom.metric_inv.get(&[a, b]).clone(),
            _ => {
                if a == b {
                    Radical::one()
                } else {
                    Radical::zero()
                }
            }
        };
        return Ok(v);
    }
    match decl.role {
        Role::Riemann | Role::Ricci | Role::FieldStrength => {
            if !f.derivs.is_empty() {
                return Err(OracleError::DerivativeOfGeometry(decl.name.clone()));
            }
            let arr = match decl.role {
                Role::Riemann => &geom.riemann,
                Role::Ricci => &geom.ricci,
                _ => &geom.field,
            };
            Ok(arr.get(&slot_vals).clone())
        }
        Role::Metric => unreachable!(),
        Role::None => {
            let Some(field) = jets.fields.get(&f.sym) else {
                return Err(OracleError::MissingField(decl.name.clone()));
            };
            let mut idx: Vec<usize> =
                f.derivs.iter().map(|i| assignment[i.name.as_str()]).collect();
            idx.extend(slot_vals);
            match f.derivs.len() {
                0 => Ok(field.value.get(&idx).clone()),
                1 => Ok(field.j1.get(&idx).clone()),
                2 => Ok(field.j2.get(&idx).clone()),
                n => Err(OracleError::DepthExceeded(decl.name.clone(), n)),
            }
        }
    }
}

/// Random nonzero values for every declared scalar symbol.
pub fn random_scalar_env(
    rng: &mut ChaCha8Rng,
    table: &SymbolTable,
) -> HashMap<ScalarId, Radical> {
    let mut env = HashMap::new();
    for (id, _) in table.scalars() {
        env.insert(id, Radical::from_rational(random_nonzero_rational(rng)));
    }
    env
}

/// One trial of an oracle run.
#[derive(Clone, Debug, serde::Serialize)]
pub struct OracleTrial {
    pub trial: usize,
    pub pass: bool,
    pub witness: Option<String>,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct OracleReport {
    pub trials: usize,
    pub pass: bool,
    pub failures: Vec<OracleTrial>,
}

/// Evaluates an expression over `trials` independent exact samples;
/// passes only if every component is exactly zero in every trial.
pub fn oracle_check(
    expr: &Expr,
    table: &SymbolTable,
    trials: usize,
    seed: u64,
    mode: SampleMode,
    base_env: &HashMap<ScalarId, Radical>,
) -> Result<OracleReport, OracleError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = table.dimension as usize;
    let fields = expr.symbols();
    let mut failures = Vec::new();
    for trial in 0..trials {
        let geom = sample_geometry(&mut rng, d, mode)?;
        // Every declared scalar gets a fresh nonzero rational per trial
        // (drawn in id order for determinism); pinned entries override.
        let mut env = HashMap::new();
        for (id, _) in table.scalars() {
            env.insert(id, Radical::from_rational(random_nonzero_rational(&mut rng)));
        }
        for (id, v) in base_env {
            env.insert(*id, v.clone());
        }
        let e_val = table
            .scalar_id("e")
            .and_then(|id| env.get(&id).cloned())
            .unwrap_or_else(Radical::zero);
        let jets = sample_jets(&mut rng, &fields, table, &geom, &e_val)?;
        let eval = eval_expr(expr, table, &geom, &jets, &env)?;
        if !eval.all_zero() {
            let witness = eval.witness().map(|(idx, v)| {
                format!(
                    "component [{}] = {}",
                    idx.iter()
                        .map(|k| k.to_string())
                        .collect::<Vec<_>>()
                        .join(" "),
                    v
                )
            });
            failures.push(OracleTrial {
                trial,
                pass: false,
                witness,
            });
        }
    }
    Ok(OracleReport {
        trials,
        pass: failures.is_empty(),
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canon::canonicalize;
    use crate::calculus::normal_order;
    use crate::parse::{parse_declarations, parse_expr};

    fn table() -> SymbolTable {
        let mut t = SymbolTable::with_geometry(4);
        parse_declarations(
            "tensor W rank=2 sym=(+(2 1)) traceless=((1 2)) charge=e\n\
             tensor V rank=1 charge=e\n\
             tensor Phi rank=0 charge=e\n",
            &mut t,
        )
        .unwrap();
        t
    }

    fn check(expr_text: &str, t: &SymbolTable, trials: usize, mode: SampleMode) -> OracleReport {
        let e = parse_expr(expr_text, t).unwrap();
        let canon = canonicalize(&e, t).unwrap().into_expr();
        oracle_check(&canon, t, trials, 7, mode, &HashMap::new()).unwrap()
    }

    #[test]
    fn metric_trace_evaluates_to_dimension() {
        let t = table();
        let e = parse_expr("g^{a b}*g_{a b} - 4", &t).unwrap();
        let r = oracle_check(&e, &t, 3, 1, SampleMode::default(), &HashMap::new()).unwrap();
        assert!(r.pass, "{:?}", r.failures);
    }

    #[test]
    fn geometry_sampling_is_deterministic() {
        let mut r1 = ChaCha8Rng::seed_from_u64(11);
        let mut r2 = ChaCha8Rng::seed_from_u64(11);
        let g1 = sample_geometry(&mut r1, 4, SampleMode::default()).unwrap();
        let g2 = sample_geometry(&mut r2, 4, SampleMode::default()).unwrap();
        assert_eq!(g1.riemann, g2.riemann);
        assert_eq!(g1.metric, g2.metric);
    }

    #[test]
    fn flat_mode_is_trivial() {
        let t = table();
        let r = check(
            "D^{c} D_{a} W_{b c} - D_{a} D^{c} W_{b c}",
            &t,
            2,
            SampleMode { flat: true, no_cyclic: false },
        );
        assert!(r.pass, "{:?}", r.failures);
    }

    #[test]
    fn curvature_commutator_identity_holds_numerically() {
        let t = table();
        // [D^c, D_a] W_{b c} = i e F_{c a} W_{b}^{c} + R_{c a b n} W^{c n} + Ric_{a c} W^{c}_{b}
        let r = check(
            "D^{c} D_{a} W_{b c} - D_{a} D^{c} W_{b c} \
             - i*e*F_{c a}*W_{b}^{c} - R_{c a b n}*W^{c n} - Ric_{a c}*W^{c}_{b}",
            &t,
            6,
            SampleMode::default(),
        );
        assert!(r.pass, "{:?}", r.failures);
    }

    #[test]
    fn mutated_identity_fails() {
        let t = table();
        let r = check(
            "D^{c} D_{a} W_{b c} - D_{a} D^{c} W_{b c} \
             - i*e*F_{c a}*W_{b}^{c} - R_{c a b n}*W^{c n} + Ric_{a c}*W^{c}_{b}",
            &t,
            6,
            SampleMode::default(),
        );
        assert!(!r.pass);
        assert!(r.failures[0].witness.is_some());
    }

    #[test]
    fn identity_survives_without_cyclic_projection() {
        let t = table();
        let r = check(
            "D^{c} D_{a} W_{b c} - D_{a} D^{c} W_{b c} \
             - i*e*F_{c a}*W_{b}^{c} - R_{c a b n}*W^{c n} - Ric_{a c}*W^{c}_{b}",
            &t,
            4,
            SampleMode { flat: false, no_cyclic: true },
        );
        assert!(r.pass, "{:?}", r.failures);
    }

    #[test]
    fn eval_consistent_with_normal_order_and_canon() {
        let t = table();
        let exprs = [
            "D_{b} D_{a} V_{c} - D_{a} D_{b} V_{c}",
            "D^{m} D_{a} W_{b m}",
            "i*Phi*F_{a b} + D_{a} D_{b} Phi",
            "g^{m n}*D_{m} D_{n} Phi",
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for text in exprs {
            let e = parse_expr(text, &t).unwrap();
            let no = normal_order(&e, &t).unwrap();
            let canon = canonicalize(&e, &t).unwrap().into_expr();
            let geom = sample_geometry(&mut rng, 4, SampleMode::default()).unwrap();
            let env = random_scalar_env(&mut rng, &t);
            let e_val = env[&t.scalar_id("e").unwrap()].clone();
            let fields: Vec<SymId> = e.symbols();
            let jets = sample_jets(&mut rng, &fields, &t, &geom, &e_val).unwrap();
            let v0 = eval_expr(&e, &t, &geom, &jets, &env).unwrap();
            let v1 = eval_expr(&no, &t, &geom, &jets, &env).unwrap();
            let v2 = eval_expr(&canon, &t, &geom, &jets, &env).unwrap();
            for (k, val) in &v0.values {
                assert_eq!(val, &v1.values[k], "normal_order changed value of {text}");
                assert_eq!(val, &v2.values[k], "canonicalize changed value of {text}");
            }
        }
    }

    #[test]
    fn traceless_jets_have_zero_trace() {
        let t = table();
        let e = parse_expr("g^{a b}*W_{a b}", &t).unwrap();
        let r = oracle_check(&e, &t, 3, 5, SampleMode::default(), &HashMap::new()).unwrap();
        assert!(r.pass);
        let e1 = parse_expr("g^{a b}*D_{c} W_{a b}", &t).unwrap();
        let r1 = oracle_check(&e1, &t, 3, 5, SampleMode::default(), &HashMap::new()).unwrap();
        assert!(r1.pass);
    }

    #[test]
    fn depth_limit_enforced() {
        let t = table();
        let e = parse_expr("D_{a} D_{b} D_{c} Phi", &t).unwrap();
        let err = oracle_check(&e, &t, 1, 1, SampleMode::default(), &HashMap::new()).unwrap_err();
        assert!(matches!(err, OracleError::DepthExceeded(_, 3)));
    }

    #[test]
    fn too_small_dimension_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = sample_geometry(&mut rng, 1, SampleMode::default()).unwrap_err();
        assert_eq!(err, OracleError::DimensionTooSmall(1));
    }
}
