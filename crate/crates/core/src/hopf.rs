//! Graded commutative Hopf algebroids given by finite presentations, and
//! their cohomology via the normalized cobar complex.
//!
//! A presentation consists of a base ring A (a [`RingPresentation`]), a list
//! of cover generators adjoined to form Γ, relations among them, and the
//! structure maps: the right unit η_R on base generators, the counit ε and
//! the diagonal Δ on cover generators. The left unit is the inclusion.
//! Everything is assumed commutative; all shipped examples have generators
//! in even total degree.
//!
//! Relations must be usable as rewrite rules: some term is a pure power of
//! a single generator with a unit coefficient, and every other term has
//! strictly smaller degree in that generator. Monomials in normal form with
//! respect to the rules then form a module basis in each degree, which is
//! what makes cobar differentials representable by exact integer matrices.
//!
//! Elements of Γ ⊗_A Γ (and longer tensors) are written in a canonical
//! straightened form: a global left coefficient monomial from A, followed by
//! pure cover monomials in each tensor slot. A base coefficient appearing
//! inside slot i > 1 is moved into slot i-1 through η_R; a coefficient in
//! slot 1 moves into the global position through the left unit.

use crate::coeffs::Coefficients;
use crate::graded::{Generator, GradedError, MultiDegree, Poly, RingPresentation};
use crate::linalg::{
    column_span_basis, kernel_basis, subquotient, GroupDescriptor, LinalgError, Mat,
};
use num::{BigInt, BigRational, One, Signed, Zero};
use serde::{Deserialize, Serialize};
use std::cell::{Cell, RefCell};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HopfError {
    #[error(transparent)]
    Graded(#[from] GradedError),
    #[error("linear algebra: {0}")]
    Linalg(#[from] LinalgError),
    #[error("bad tensor expression `{src}`: {msg}")]
    BadTensor { src: String, msg: String },
    #[error("relation `{0}` cannot be used as a rewrite rule")]
    UnsupportedRelation(String),
    #[error("rewriting did not terminate (fuel exhausted)")]
    RewriteDiverged,
    #[error("counit of `{0}` is nonzero; the cobar complex here requires augmented covers")]
    UnsupportedEpsilon(String),
    #[error("requested window is too large to compute exactly")]
    WindowTooLarge,
    #[error("presentation has not been validated; run validate() first")]
    UnvalidatedInput,
    #[error("comodule fails its structure laws: {0}")]
    ComoduleInvalid(String),
    #[error("ideal entry `{0}` is not a prime constant or a base generator")]
    UnsupportedIdealShape(String),
    #[error("ideal is not invariant: {0}")]
    NotInvariant(String),
    #[error("witness family fails the rank identity at degree {degree:?}")]
    WitnessFails { degree: Vec<i64> },
    #[error("malformed presentation json: {0}")]
    BadJson(String),
}

/// One rewrite rule v^power -> rhs, with rhs of strictly smaller v-degree.
#[derive(Debug, Clone, PartialEq)]
struct RewriteRule {
    var: usize,
    power: u32,
    rhs: Poly,
}

const REWRITE_FUEL: usize = 10_000_000;

fn mono_mul(a: &[u32], b: &[u32]) -> Vec<u32> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Split a combined monomial into its base part and its cover part.
fn mono_split(m: &[u32], n_base: usize) -> (Vec<u32>, Vec<u32>) {
    let mut a = m.to_vec();
    let mut g = m.to_vec();
    for i in 0..m.len() {
        if i < n_base {
            g[i] = 0;
        } else {
            a[i] = 0;
        }
    }
    (a, g)
}

fn is_base_only(m: &[u32], n_base: usize) -> bool {
    m[n_base..].iter().all(|&e| e == 0)
}

fn is_cover_only(m: &[u32], n_base: usize) -> bool {
    m[..n_base].iter().all(|&e| e == 0)
}

/// Derive rewrite rules from a relation set. Every nonzero relation must
/// yield a rule; identical duplicates are skipped.
/// Reduce coefficients to their canonical representatives when the ring is a
/// prime field; drop the terms that vanish.
fn reduce_poly(coeffs: &Coefficients, p: &Poly) -> Poly {
    let q = match coeffs {
        Coefficients::Fp { p: q } => *q,
        _ => return p.clone(),
    };
    let bp = num::BigInt::from(q);
    let mut out = Poly::zero();
    for (e, c) in &p.terms {
        let den = num::Integer::mod_floor(c.denom(), &bp);
        assert!(!den.is_zero(), "denominator divisible by the characteristic");
        let inv = den.modpow(&num::BigInt::from(q - 2), &bp);
        let rint = num::Integer::mod_floor(&(c.numer() * inv), &bp);
        if !rint.is_zero() {
            out.add_term(e.clone(), &BigRational::from(rint));
        }
    }
    out
}

fn derive_rules(
    relations: &[Poly],
    sources: &[String],
    coeffs: &Coefficients,
) -> Result<Vec<RewriteRule>, HopfError> {
    let mut rules: Vec<RewriteRule> = Vec::new();
    let mut seen: Vec<Poly> = Vec::new();
    for (rel, src) in relations.iter().zip(sources) {
        if rel.is_zero() {
            continue;
        }
        if seen.contains(rel) {
            continue;
        }
        seen.push(rel.clone());
        // Candidate terms: c * v^k with c a unit and all other terms of
        // v-degree < k. Among candidates prefer the latest-declared
        // generator, so adjoined variables rewrite into earlier ones.
        let mut best: Option<(usize, u32)> = None;
        for (expos, c) in &rel.terms {
            let nz: Vec<usize> = (0..expos.len()).filter(|&i| expos[i] > 0).collect();
            if nz.len() != 1 || !coeffs.is_unit(c) {
                continue;
            }
            let (v, k) = (nz[0], expos[nz[0]]);
            let ok = rel
                .terms
                .iter()
                .all(|(e2, _)| e2 == expos || e2[v] < k);
            if !ok {
                continue;
            }
            best = match best {
                None => Some((v, k)),
                Some((bv, bk)) if v > bv || (v == bv && k < bk) => Some((v, k)),
                other => other,
            };
        }
        let (v, k) = best.ok_or_else(|| HopfError::UnsupportedRelation(src.clone()))?;
        let mut lead = vec![0u32; rel.terms.keys().next().map(|e| e.len()).unwrap_or(0)];
        lead[v] = k;
        let c = rel.terms.get(&lead).expect("candidate term present").clone();
        let rest = {
            let mut r = rel.clone();
            r.add_term(lead, &(-c.clone()));
            r
        };
        let rhs = rest.neg().scale(&c.recip());
        rules.push(RewriteRule { var: v, power: k, rhs });
    }
    Ok(rules)
}

/// Element of Γ^(⊗s) in straightened form: global base monomial, then pure
/// cover monomials per slot (an all-zero slot is the identity).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tensor {
    pub slots: usize,
    pub terms: BTreeMap<(Vec<u32>, Vec<Vec<u32>>), BigRational>,
}

impl Tensor {
    pub fn zero(slots: usize) -> Tensor {
        Tensor { slots, terms: BTreeMap::new() }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
}

/// Work item for the straightener; the module index rides along untouched.
#[derive(Debug, Clone)]
struct RawTerm {
    c: BigRational,
    a: Vec<u32>,
    slots: Vec<Vec<u32>>,
    m: usize,
}

type CanonKey = (Vec<u32>, Vec<Vec<u32>>, usize);

/// Finitely presented graded Hopf algebroid.
#[derive(Clone)]
pub struct HopfPresentation {
    pub base: RingPresentation,
    pub gamma: Vec<Generator>,
    pub gamma_relation_sources: Vec<String>,
    pub eta_r_sources: Vec<(String, String)>,
    pub epsilon_sources: Vec<(String, String)>,
    pub delta_sources: Vec<(String, String)>,
    /// Base and cover generators in one polynomial ring, relation-free;
    /// used for parsing, degrees, and monomial enumeration.
    combined: RingPresentation,
    gamma_only: Option<RingPresentation>,
    n_base: usize,
    rules: Vec<RewriteRule>,
    gamma_relations: Vec<Poly>,
    eta_r: Vec<Poly>,
    epsilon: Vec<Poly>,
    delta: Vec<Tensor>,
    validated: Cell<bool>,
    caches: RefCell<Caches>,
}

#[derive(Default, Clone)]
struct Caches {
    eta_mono: BTreeMap<Vec<u32>, Poly>,
    delta_mono: BTreeMap<Vec<u32>, Tensor>,
    base_monos: BTreeMap<Vec<i64>, Vec<Vec<u32>>>,
    gamma_monos: BTreeMap<Vec<i64>, Vec<Vec<u32>>>,
    combined_monos: BTreeMap<Vec<i64>, Vec<Vec<u32>>>,
}

impl HopfPresentation {
    pub fn new(
        base: RingPresentation,
        gamma: Vec<Generator>,
        gamma_relation_sources: Vec<String>,
        eta_r_sources: Vec<(String, String)>,
        epsilon_sources: Vec<(String, String)>,
        delta_sources: Vec<(String, String)>,
    ) -> Result<HopfPresentation, HopfError> {
        let arity = base.arity();
        let n_base = base.nvars();
        for g in base.generators.iter().chain(&gamma) {
            if g.inverted {
                return Err(HopfError::UnsupportedRelation(format!(
                    "inverted generator `{}`",
                    g.name
                )));
            }
        }
        let mut all_gens = base.generators.clone();
        all_gens.extend(gamma.iter().cloned());
        let combined =
            RingPresentation::new(base.coefficients.clone(), all_gens, Vec::new())?;
        // Enumeration must be finite in every degree.
        combined.monomials_of_degree(&MultiDegree::zero(arity))?;
        let gamma_only = if gamma.is_empty() {
            None
        } else {
            Some(RingPresentation::new(
                base.coefficients.clone(),
                gamma.clone(),
                Vec::new(),
            )?)
        };

        let mut gamma_relations = Vec::new();
        for src in &gamma_relation_sources {
            let p = combined.parse(src)?;
            combined.degree_of(&p).map_err(|e| match e {
                GradedError::NonHomogeneous { .. } => {
                    GradedError::NonHomogeneous { src: src.clone() }
                }
                other => other,
            })?;
            gamma_relations.push(p);
        }

        // Rules: base relations first (embedded into the combined space),
        // then cover relations.
        let mut rule_polys = Vec::new();
        let mut rule_srcs = Vec::new();
        for (rel, src) in base.relations.iter().zip(&base.relation_sources) {
            let mut p = Poly::zero();
            for (e, c) in &rel.terms {
                let mut e2 = e.clone();
                e2.resize(combined.nvars(), 0);
                p.add_term(e2, c);
            }
            rule_polys.push(p);
            rule_srcs.push(src.clone());
        }
        rule_polys.extend(gamma_relations.iter().cloned());
        rule_srcs.extend(gamma_relation_sources.iter().cloned());
        let rule_polys: Vec<Poly> = rule_polys
            .iter()
            .map(|p| reduce_poly(&base.coefficients, p))
            .collect();
        let rules = derive_rules(&rule_polys, &rule_srcs, &base.coefficients)?;
        for r in &rules {
            // A base-ring rule must rewrite into the base ring.
            if r.var < n_base && !r.rhs.terms.keys().all(|e| is_base_only(e, n_base)) {
                return Err(HopfError::UnsupportedRelation(format!(
                    "base relation rewrites `{}` into cover generators",
                    combined.generators[r.var].name
                )));
            }
        }

        let mut h = HopfPresentation {
            base,
            gamma,
            gamma_relation_sources,
            eta_r_sources,
            epsilon_sources,
            delta_sources,
            combined,
            gamma_only,
            n_base,
            rules,
            gamma_relations,
            eta_r: Vec::new(),
            epsilon: Vec::new(),
            delta: Vec::new(),
            validated: Cell::new(false),
            caches: RefCell::new(Caches::default()),
        };

        // Structure maps. Images are stored rule-normalized.
        let mut eta = Vec::new();
        for g in &h.base.generators {
            let src = h
                .eta_r_sources
                .iter()
                .find(|(n, _)| n == &g.name)
                .ok_or_else(|| GradedError::UnknownGenerator { name: g.name.clone() })?;
            eta.push(h.normalize(&h.combined.parse(&src.1)?)?);
        }
        h.eta_r = eta;
        let mut eps = Vec::new();
        for g in &h.gamma {
            let src = h
                .epsilon_sources
                .iter()
                .find(|(n, _)| n == &g.name)
                .ok_or_else(|| GradedError::UnknownGenerator { name: g.name.clone() })?;
            let p = h.normalize(&h.combined.parse(&src.1)?)?;
            if !p.terms.keys().all(|e| is_base_only(e, h.n_base)) {
                return Err(HopfError::BadTensor {
                    src: src.1.clone(),
                    msg: "counit image must lie in the base ring".into(),
                });
            }
            eps.push(p);
        }
        h.epsilon = eps;
        let mut deltas = Vec::new();
        for g in &h.gamma {
            let src = h
                .delta_sources
                .iter()
                .find(|(n, _)| n == &g.name)
                .ok_or_else(|| GradedError::UnknownGenerator { name: g.name.clone() })?;
            let pairs = h.parse_tensor2(&src.1)?;
            let mut items = Vec::new();
            for (sign, left, right) in pairs {
                for (el, cl) in &left.terms {
                    for (er, cr) in &right.terms {
                        items.push(RawTerm {
                            c: &sign * cl * cr,
                            a: vec![0; h.combined.nvars()],
                            slots: vec![el.clone(), er.clone()],
                            m: 0,
                        });
                    }
                }
            }
            deltas.push(h.straighten_to_tensor(items, 2)?);
        }
        h.delta = deltas;
        Ok(h)
    }

    pub fn arity(&self) -> usize {
        self.base.arity()
    }

    fn nvars(&self) -> usize {
        self.combined.nvars()
    }

    pub fn gamma_index(&self, name: &str) -> Option<usize> {
        self.gamma.iter().position(|g| g.name == name)
    }

    /// Rule-normal form of a combined polynomial. Over a prime field the
    /// coefficients are also reduced, so integer multiples of p vanish.
    fn normalize(&self, p: &Poly) -> Result<Poly, HopfError> {
        let mut out = Poly::zero();
        let mut stack: Vec<(Vec<u32>, BigRational)> = p
            .terms
            .iter()
            .map(|(e, c)| (e.clone(), self.reduce_coeff(c)))
            .collect();
        let mut fuel = REWRITE_FUEL;
        while let Some((e, c)) = stack.pop() {
            if fuel == 0 {
                return Err(HopfError::RewriteDiverged);
            }
            fuel -= 1;
            if c.is_zero() {
                continue;
            }
            match self.rules.iter().find(|r| e[r.var] >= r.power) {
                None => out.add_term(e, &c),
                Some(r) => {
                    let mut rem = e.clone();
                    rem[r.var] -= r.power;
                    let prod = r.rhs.mul_monomial(&rem);
                    for (e2, c2) in &prod.terms {
                        stack.push((e2.clone(), self.reduce_coeff(&(&c * c2))));
                    }
                }
            }
        }
        Ok(out)
    }

    fn reduce_coeff(&self, c: &BigRational) -> BigRational {
        if let Coefficients::Fp { p } = &self.base.coefficients {
            let pb = BigInt::from(*p);
            let inv = mod_inverse(c.denom(), &pb);
            let mut r = (c.numer() * inv) % &pb;
            if r.is_negative() {
                r += &pb;
            }
            BigRational::from(r)
        } else {
            c.clone()
        }
    }
}

fn mod_inverse(a: &BigInt, p: &BigInt) -> BigInt {
    // Extended Euclid; denominators are guaranteed prime to p.
    let (mut r0, mut r1) = (p.clone(), ((a % p) + p) % p);
    let (mut t0, mut t1) = (BigInt::zero(), BigInt::one());
    while !r1.is_zero() {
        let q = &r0 / &r1;
        let r2 = &r0 - &q * &r1;
        r0 = std::mem::replace(&mut r1, r2);
        let t2 = &t0 - &q * &t1;
        t0 = std::mem::replace(&mut t1, t2);
    }
    assert!(r0.is_one(), "denominator not invertible modulo p");
    ((t0 % p) + p) % p
}

impl HopfPresentation {
    /// Canonicalize raw tensor terms: rewrite rule violations anywhere,
    /// move base coefficients leftward through η_R, and pull slot-1 base
    /// coefficients into the global position. Terminates because each
    /// leftward move strictly decreases a weighted position functional and
    /// rewriting strictly decreases rule-variable exponents.
    fn straighten(
        &self,
        items: Vec<RawTerm>,
    ) -> Result<BTreeMap<CanonKey, BigRational>, HopfError> {
        let mut out: BTreeMap<CanonKey, BigRational> = BTreeMap::new();
        let mut stack = items;
        let mut fuel = REWRITE_FUEL;
        'outer: while let Some(mut t) = stack.pop() {
            if fuel == 0 {
                return Err(HopfError::RewriteDiverged);
            }
            fuel -= 1;
            if t.c.is_zero() {
                continue;
            }
            // Rule violation in the global part or any slot.
            for r in &self.rules {
                if t.a[r.var] >= r.power {
                    let mut rem = t.a.clone();
                    rem[r.var] -= r.power;
                    let prod = r.rhs.mul_monomial(&rem);
                    for (e2, c2) in &prod.terms {
                        // Global rewrites stay in the base ring.
                        let mut t2 = t.clone();
                        t2.c = self.reduce_coeff(&(&t.c * c2));
                        t2.a = e2.clone();
                        stack.push(t2);
                    }
                    continue 'outer;
                }
                for i in 0..t.slots.len() {
                    if t.slots[i][r.var] >= r.power {
                        let mut rem = t.slots[i].clone();
                        rem[r.var] -= r.power;
                        let prod = r.rhs.mul_monomial(&rem);
                        for (e2, c2) in &prod.terms {
                            let mut t2 = t.clone();
                            t2.c = self.reduce_coeff(&(&t.c * c2));
                            t2.slots[i] = e2.clone();
                            stack.push(t2);
                        }
                        continue 'outer;
                    }
                }
            }
            // Rightmost slot beyond the first carrying base content moves
            // it into the previous slot through η_R.
            for i in (1..t.slots.len()).rev() {
                if !is_cover_only(&t.slots[i], self.n_base) {
                    let (ap, gp) = mono_split(&t.slots[i], self.n_base);
                    let eta = self.eta_of_base_mono(&ap)?;
                    for (e2, c2) in &eta.terms {
                        let mut t2 = t.clone();
                        t2.c = self.reduce_coeff(&(&t.c * c2));
                        t2.slots[i] = gp.clone();
                        t2.slots[i - 1] = mono_mul(&t.slots[i - 1], e2);
                        stack.push(t2);
                    }
                    continue 'outer;
                }
            }
            // Slot-1 base content is a left coefficient.
            if let Some(s0) = t.slots.first() {
                if !is_cover_only(s0, self.n_base) {
                    let (ap, gp) = mono_split(s0, self.n_base);
                    t.a = mono_mul(&t.a, &ap);
                    t.slots[0] = gp;
                    stack.push(t);
                    continue;
                }
            }
            let key = (t.a, t.slots, t.m);
            let c = self.reduce_coeff(&t.c);
            let entry = out.entry(key).or_insert_with(BigRational::zero);
            *entry = self.reduce_coeff(&(&*entry + &c));
        }
        out.retain(|_, v| !v.is_zero());
        Ok(out)
    }

    fn straighten_to_tensor(
        &self,
        items: Vec<RawTerm>,
        slots: usize,
    ) -> Result<Tensor, HopfError> {
        let map = self.straighten(items)?;
        let mut t = Tensor::zero(slots);
        for ((a, sl, m), c) in map {
            assert_eq!(m, 0, "tensor terms carry no module index");
            assert_eq!(sl.len(), slots);
            t.terms.insert((a, sl), c);
        }
        Ok(t)
    }

    /// η_R applied to a base monomial, rule-normalized. Memoized.
    fn eta_of_base_mono(&self, m: &[u32]) -> Result<Poly, HopfError> {
        debug_assert!(is_base_only(m, self.n_base));
        if let Some(p) = self.caches.borrow().eta_mono.get(m) {
            return Ok(p.clone());
        }
        let p = match (0..self.n_base).find(|&i| m[i] > 0) {
            None => Poly::constant(self.nvars(), BigRational::one()),
            Some(i) => {
                let mut m2 = m.to_vec();
                m2[i] -= 1;
                let rest = self.eta_of_base_mono(&m2)?;
                self.normalize(&rest.mul(&self.eta_r[i]))?
            }
        };
        self.caches
            .borrow_mut()
            .eta_mono
            .insert(m.to_vec(), p.clone());
        Ok(p)
    }

    /// η_R as a ring map on base-only polynomials.
    fn eta_of_poly(&self, p: &Poly) -> Result<Poly, HopfError> {
        let mut out = Poly::zero();
        for (e, c) in &p.terms {
            let img = self.eta_of_base_mono(e)?;
            out = out.add(&img.scale(c));
        }
        self.normalize(&out)
    }

    /// ε as a ring map: base generators fix, cover generators map to their
    /// counit images.
    fn eps_of_poly(&self, p: &Poly) -> Result<Poly, HopfError> {
        let nv = self.nvars();
        let mut images = Vec::with_capacity(nv);
        for i in 0..nv {
            if i < self.n_base {
                images.push(Poly::variable(nv, i));
            } else {
                images.push(self.epsilon[i - self.n_base].clone());
            }
        }
        self.normalize(&p.substitute(&images, nv))
    }

    /// Δ applied to a pure cover monomial, canonical two-slot form. Memoized.
    fn delta_of_gamma_mono(&self, m: &[u32]) -> Result<Tensor, HopfError> {
        debug_assert!(is_cover_only(m, self.n_base));
        if let Some(t) = self.caches.borrow().delta_mono.get(m) {
            return Ok(t.clone());
        }
        let nv = self.nvars();
        let t = match (self.n_base..nv).find(|&i| m[i] > 0) {
            None => {
                let mut t = Tensor::zero(2);
                t.terms
                    .insert((vec![0; nv], vec![vec![0; nv], vec![0; nv]]), BigRational::one());
                t
            }
            Some(i) => {
                let mut m2 = m.to_vec();
                m2[i] -= 1;
                let rest = self.delta_of_gamma_mono(&m2)?;
                let dg = &self.delta[i - self.n_base];
                let mut items = Vec::new();
                for ((a1, s1), c1) in &rest.terms {
                    for ((a2, s2), c2) in &dg.terms {
                        items.push(RawTerm {
                            c: c1 * c2,
                            a: mono_mul(a1, a2),
                            slots: vec![mono_mul(&s1[0], &s2[0]), mono_mul(&s1[1], &s2[1])],
                            m: 0,
                        });
                    }
                }
                self.straighten_to_tensor(items, 2)?
            }
        };
        self.caches
            .borrow_mut()
            .delta_mono
            .insert(m.to_vec(), t.clone());
        Ok(t)
    }

    /// Δ as a ring map on combined polynomials (base parts are left
    /// coefficients).
    fn delta_of_poly(&self, p: &Poly) -> Result<Tensor, HopfError> {
        let mut items = Vec::new();
        for (e, c) in &p.terms {
            let (ap, gp) = mono_split(e, self.n_base);
            let dg = self.delta_of_gamma_mono(&gp)?;
            for ((a2, s2), c2) in &dg.terms {
                items.push(RawTerm {
                    c: c * c2,
                    a: mono_mul(&ap, a2),
                    slots: s2.clone(),
                    m: 0,
                });
            }
        }
        self.straighten_to_tensor(items, 2)
    }

    /// Parse a sum of `left@right` tensor summands: returns the signed
    /// factor pairs before straightening.
    fn parse_tensor2(&self, src: &str) -> Result<Vec<(BigRational, Poly, Poly)>, HopfError> {
        let mut out = Vec::new();
        for part in split_summands(src) {
            let pieces = split_at_depth0(&part, '@');
            if pieces.len() != 2 {
                return Err(HopfError::BadTensor {
                    src: src.to_string(),
                    msg: format!("summand `{}` needs exactly one `@`", part.trim()),
                });
            }
            let left = self.combined.parse(pieces[0].trim())?;
            let right = self.combined.parse(pieces[1].trim())?;
            out.push((BigRational::one(), left, right));
        }
        Ok(out)
    }
}

/// Split an expression at top-level `+`/`-` boundaries, keeping each sign
/// with its summand.
fn split_summands(src: &str) -> Vec<String> {
    let mut parts = Vec::new();
    let mut buf = String::new();
    let mut depth = 0i32;
    for ch in src.chars() {
        match ch {
            '(' => {
                depth += 1;
                buf.push(ch);
            }
            ')' => {
                depth -= 1;
                buf.push(ch);
            }
            '+' | '-' | '\u{2212}' if depth == 0 && !buf.trim().is_empty() => {
                parts.push(std::mem::take(&mut buf));
                buf.push(if ch == '+' { '+' } else { '-' });
            }
            _ => buf.push(ch),
        }
    }
    if !buf.trim().is_empty() {
        parts.push(buf);
    }
    parts
}

fn split_at_depth0(src: &str, sep: char) -> Vec<String> {
    let mut parts = Vec::new();
    let mut buf = String::new();
    let mut depth = 0i32;
    for ch in src.chars() {
        match ch {
            '(' => {
                depth += 1;
                buf.push(ch);
            }
            ')' => {
                depth -= 1;
                buf.push(ch);
            }
            c if c == sep && depth == 0 => parts.push(std::mem::take(&mut buf)),
            _ => buf.push(ch),
        }
    }
    parts.push(buf);
    parts
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationFailure {
    pub law: String,
    pub subject: String,
    pub detail: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub failures: Vec<ValidationFailure>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.failures.is_empty()
    }
}

impl HopfPresentation {
    /// Check every structure law exactly on generators and relations:
    /// homogeneity of the structure images, both counit laws,
    /// coassociativity, compatibility of Δ with η_R and with the cover
    /// relations, and invariance of the base relations under η_R. A clean
    /// report marks the presentation as validated.
    pub fn validate(&self) -> Result<ValidationReport, HopfError> {
        let mut rep = ValidationReport::default();
        let nv = self.nvars();
        // Degree homogeneity of all structure images. A zero image is
        // homogeneous of any degree; an inhomogeneous one is a failure, not
        // an error.
        for (i, g) in self.base.generators.iter().enumerate() {
            match self.combined.degree_of(&self.eta_r[i]) {
                Ok(Some(d)) if d == g.degree => {}
                Ok(None) => {}
                Ok(Some(_)) | Err(GradedError::NonHomogeneous { .. }) => {
                    rep.failures.push(ValidationFailure {
                        law: "homogeneous".into(),
                        subject: format!("eta_r({})", g.name),
                        detail: self.combined.format_poly(&self.eta_r[i]),
                    })
                }
                Err(e) => return Err(e.into()),
            }
        }
        for (j, g) in self.gamma.iter().enumerate() {
            match self.combined.degree_of(&self.epsilon[j]) {
                Ok(Some(d)) if d == g.degree => {}
                Ok(None) => {}
                Ok(Some(_)) | Err(GradedError::NonHomogeneous { .. }) => {
                    rep.failures.push(ValidationFailure {
                        law: "homogeneous".into(),
                        subject: format!("epsilon({})", g.name),
                        detail: self.combined.format_poly(&self.epsilon[j]),
                    })
                }
                Err(e) => return Err(e.into()),
            }
            for (a, slots) in self.delta[j].terms.keys() {
                let mut d = self.combined.monomial_degree(a);
                for s in slots {
                    d = d.add(&self.combined.monomial_degree(s));
                }
                if d != g.degree {
                    rep.failures.push(ValidationFailure {
                        law: "homogeneous".into(),
                        subject: format!("delta({})", g.name),
                        detail: format!("term of degree {:?}", d.0),
                    });
                    break;
                }
            }
        }

        // ε(η_R(a)) = a for base generators.
        for (i, g) in self.base.generators.iter().enumerate() {
            let lhs = self.eps_of_poly(&self.eta_r[i])?;
            let rhs = self.normalize(&Poly::variable(nv, i))?;
            if lhs != rhs {
                rep.failures.push(ValidationFailure {
                    law: "counit-right-unit".into(),
                    subject: g.name.clone(),
                    detail: self.combined.format_poly(&lhs),
                });
            }
        }

        // (ε⊗id)Δ = id and (id⊗ε)Δ = id on cover generators; the right-hand
        // counit routes through η_R.
        for (j, g) in self.gamma.iter().enumerate() {
            let var = self.normalize(&Poly::variable(nv, self.n_base + j))?;
            let mut left = Poly::zero();
            let mut right = Poly::zero();
            for ((a, slots), c) in &self.delta[j].terms {
                let eps_v = self.eps_of_mono(&slots[0])?;
                let lterm = eps_v.mul_monomial(&mono_mul(a, &slots[1])).scale(c);
                left = left.add(&lterm);
                let eps_w = self.eps_of_mono(&slots[1])?;
                let eta_w = self.eta_of_poly(&eps_w)?;
                let rterm = eta_w.mul_monomial(&mono_mul(a, &slots[0])).scale(c);
                right = right.add(&rterm);
            }
            let left = self.normalize(&left)?;
            let right = self.normalize(&right)?;
            if left != var {
                rep.failures.push(ValidationFailure {
                    law: "counit-left".into(),
                    subject: g.name.clone(),
                    detail: self.combined.format_poly(&left),
                });
            }
            if right != var {
                rep.failures.push(ValidationFailure {
                    law: "counit-right".into(),
                    subject: g.name.clone(),
                    detail: self.combined.format_poly(&right),
                });
            }
        }

        // Coassociativity on cover generators, compared in straightened
        // three-slot form.
        for (j, g) in self.gamma.iter().enumerate() {
            let mut litems = Vec::new();
            let mut ritems = Vec::new();
            for ((a, slots), c) in &self.delta[j].terms {
                let dv = self.delta_of_gamma_mono(&slots[0])?;
                for ((a2, s2), c2) in &dv.terms {
                    litems.push(RawTerm {
                        c: c * c2,
                        a: mono_mul(a, a2),
                        slots: vec![s2[0].clone(), s2[1].clone(), slots[1].clone()],
                        m: 0,
                    });
                }
                let dw = self.delta_of_gamma_mono(&slots[1])?;
                for ((a2, s2), c2) in &dw.terms {
                    ritems.push(RawTerm {
                        c: c * c2,
                        a: a.clone(),
                        slots: vec![slots[0].clone(), mono_mul(a2, &s2[0]), s2[1].clone()],
                        m: 0,
                    });
                }
            }
            let lhs = self.straighten(litems)?;
            let rhs = self.straighten(ritems)?;
            if lhs != rhs {
                rep.failures.push(ValidationFailure {
                    law: "coassociative".into(),
                    subject: g.name.clone(),
                    detail: "(Δ⊗id)Δ differs from (id⊗Δ)Δ".into(),
                });
            }
        }

        // Δ(η_R(a)) = 1⊗η_R(a) for base generators: the right unit is a
        // comodule algebra map into the primitively-framed column.
        for (i, g) in self.base.generators.iter().enumerate() {
            let lhs = self.delta_of_poly(&self.eta_r[i])?;
            let mut ritems = Vec::new();
            for (e, c) in &self.eta_r[i].terms {
                ritems.push(RawTerm {
                    c: c.clone(),
                    a: vec![0; nv],
                    slots: vec![vec![0; nv], e.clone()],
                    m: 0,
                });
            }
            let rhs = self.straighten_to_tensor(ritems, 2)?;
            if lhs != rhs {
                rep.failures.push(ValidationFailure {
                    law: "delta-right-unit".into(),
                    subject: g.name.clone(),
                    detail: "Δ∘η_R differs from 1⊗η_R".into(),
                });
            }
        }

        // Base relations are preserved by η_R.
        for (rel, src) in self.base.relations.iter().zip(&self.base.relation_sources) {
            let mut p = Poly::zero();
            for (e, c) in &rel.terms {
                let mut e2 = e.clone();
                e2.resize(nv, 0);
                p.add_term(e2, c);
            }
            let img = self.eta_of_poly(&p)?;
            if !img.is_zero() {
                rep.failures.push(ValidationFailure {
                    law: "eta-preserves-relation".into(),
                    subject: src.clone(),
                    detail: self.combined.format_poly(&img),
                });
            }
        }

        // Cover relations are respected by ε and by Δ.
        for (rel, src) in self.gamma_relations.iter().zip(&self.gamma_relation_sources) {
            let e = self.eps_of_poly(rel)?;
            if !e.is_zero() {
                rep.failures.push(ValidationFailure {
                    law: "epsilon-respects-relation".into(),
                    subject: src.clone(),
                    detail: self.combined.format_poly(&e),
                });
            }
            let d = self.delta_of_poly(rel)?;
            if !d.is_zero() {
                rep.failures.push(ValidationFailure {
                    law: "delta-respects-relation".into(),
                    subject: src.clone(),
                    detail: format!("{} straightened terms survive", d.terms.len()),
                });
            }
        }

        self.validated.set(rep.is_ok());
        Ok(rep)
    }

    fn eps_of_mono(&self, m: &[u32]) -> Result<Poly, HopfError> {
        let mut out = Poly::constant(self.nvars(), BigRational::one());
        for j in self.n_base..self.nvars() {
            if m[j] > 0 {
                out = out.mul(&self.epsilon[j - self.n_base].pow(m[j], self.nvars()));
            }
        }
        let mut base = vec![0u32; self.nvars()];
        base[..self.n_base].copy_from_slice(&m[..self.n_base]);
        self.normalize(&out.mul_monomial(&base))
    }

    pub fn is_validated(&self) -> bool {
        self.validated.get()
    }
}

/// All degree vectors 0 <= e <= d componentwise; empty if d has a negative
/// coordinate.
fn degree_box(d: &MultiDegree) -> Vec<MultiDegree> {
    if d.0.iter().any(|&x| x < 0) {
        return Vec::new();
    }
    let mut out = vec![Vec::new()];
    for &hi in &d.0 {
        let mut next = Vec::new();
        for stem in &out {
            for v in 0..=hi {
                let mut s2 = stem.clone();
                s2.push(v);
                next.push(s2);
            }
        }
        out = next;
    }
    out.into_iter().map(MultiDegree).collect()
}

impl HopfPresentation {
    /// Rule-normal base monomials of one degree, embedded in the combined
    /// exponent space. Memoized.
    pub(crate) fn base_monos_normal(&self, d: &MultiDegree) -> Result<Vec<Vec<u32>>, HopfError> {
        if let Some(v) = self.caches.borrow().base_monos.get(&d.0) {
            return Ok(v.clone());
        }
        let nv = self.nvars();
        let mut out = Vec::new();
        for m in self.base.monomials_of_degree(d)? {
            let mut e = m.clone();
            e.resize(nv, 0);
            if self
                .rules
                .iter()
                .all(|r| r.var >= self.n_base || e[r.var] < r.power)
            {
                out.push(e);
            }
        }
        self.caches
            .borrow_mut()
            .base_monos
            .insert(d.0.clone(), out.clone());
        Ok(out)
    }

    /// Rule-normal pure cover monomials of one degree. Memoized.
    fn gamma_monos_normal(&self, d: &MultiDegree) -> Result<Vec<Vec<u32>>, HopfError> {
        if let Some(v) = self.caches.borrow().gamma_monos.get(&d.0) {
            return Ok(v.clone());
        }
        let nv = self.nvars();
        let mut out = Vec::new();
        match &self.gamma_only {
            None => {
                if d.0.iter().all(|&x| x == 0) {
                    out.push(vec![0; nv]);
                }
            }
            Some(go) => {
                for m in go.monomials_of_degree(d)? {
                    let mut e = vec![0u32; nv];
                    e[self.n_base..].copy_from_slice(&m);
                    if self
                        .rules
                        .iter()
                        .all(|r| r.var < self.n_base || e[r.var] < r.power)
                    {
                        out.push(e);
                    }
                }
            }
        }
        self.caches
            .borrow_mut()
            .gamma_monos
            .insert(d.0.clone(), out.clone());
        Ok(out)
    }

    /// Rule-normal combined monomials of one degree. Memoized.
    fn combined_monos_normal(&self, d: &MultiDegree) -> Result<Vec<Vec<u32>>, HopfError> {
        if let Some(v) = self.caches.borrow().combined_monos.get(&d.0) {
            return Ok(v.clone());
        }
        let mut out = Vec::new();
        for e in self.combined.monomials_of_degree(d)? {
            if self.rules.iter().all(|r| e[r.var] < r.power) {
                out.push(e);
            }
        }
        self.caches
            .borrow_mut()
            .combined_monos
            .insert(d.0.clone(), out.clone());
        Ok(out)
    }

    /// Degrees up to d that carry a nonidentity cover monomial.
    fn gamma_degrees_upto(&self, d: &MultiDegree) -> Result<Vec<MultiDegree>, HopfError> {
        let mut out = Vec::new();
        for e in degree_box(d) {
            if e.0.iter().all(|&x| x == 0) {
                continue;
            }
            if !self.gamma_monos_normal(&e)?.is_empty() {
                out.push(e);
            }
        }
        Ok(out)
    }

    fn slot_tuples(
        &self,
        d: &MultiDegree,
        s: usize,
    ) -> Result<Vec<Vec<Vec<u32>>>, HopfError> {
        if s == 0 {
            return Ok(if d.0.iter().all(|&x| x == 0) {
                vec![Vec::new()]
            } else {
                Vec::new()
            });
        }
        let mut out = Vec::new();
        for e in self.gamma_degrees_upto(d)? {
            let rest = d.sub(&e);
            if rest.0.iter().any(|&x| x < 0) {
                continue;
            }
            let tails = self.slot_tuples(&rest, s - 1)?;
            if tails.is_empty() {
                continue;
            }
            for g in self.gamma_monos_normal(&e)? {
                for t in &tails {
                    let mut tuple = Vec::with_capacity(s);
                    tuple.push(g.clone());
                    tuple.extend(t.iter().cloned());
                    out.push(tuple);
                }
            }
        }
        Ok(out)
    }
}

/// Free comodule over the base: generators with degrees, and the coaction
/// written as `expr@generator` sums over combined names.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComodulePresentation {
    pub gens: Vec<(String, MultiDegree)>,
    pub psi_sources: Vec<(String, String)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtWindow {
    pub s_max: usize,
    pub deg_max: MultiDegree,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtEntry {
    pub group: GroupDescriptor,
    pub generators: Vec<(String, String)>,
}

/// Cohomology of one window: entries keyed by (cohomological degree,
/// internal degree). Zero groups are stored too, so window coverage is
/// explicit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtTable {
    pub s_max: usize,
    pub deg_max: MultiDegree,
    pub entries: BTreeMap<(usize, Vec<i64>), ExtEntry>,
}

impl ExtTable {
    pub fn group(&self, s: usize, d: &[i64]) -> GroupDescriptor {
        self.entries
            .get(&(s, d.to_vec()))
            .map(|e| e.group.clone())
            .unwrap_or_default()
    }

    pub fn to_csv(&self) -> String {
        let arity = self.deg_max.arity();
        let names = ["t", "m", "u", "v"];
        let mut out = String::from("s");
        for n in names.iter().take(arity) {
            out.push(',');
            out.push_str(n);
        }
        out.push_str(",rank,torsion,generators\n");
        for ((s, d), e) in &self.entries {
            if e.group.is_zero() {
                continue;
            }
            out.push_str(&s.to_string());
            for x in d {
                out.push(',');
                out.push_str(&x.to_string());
            }
            let torsion = e
                .group
                .torsion
                .iter()
                .map(|(p, k)| {
                    if *k == 1 {
                        p.to_string()
                    } else {
                        format!("{}^{}", p, k)
                    }
                })
                .collect::<Vec<_>>()
                .join(";");
            let gens = e
                .generators
                .iter()
                .map(|(_, l)| l.clone())
                .collect::<Vec<_>>()
                .join("; ");
            out.push_str(&format!(",{},{},{}\n", e.group.free, torsion, gens));
        }
        out
    }
}

struct ComoduleData {
    degs: Vec<MultiDegree>,
    psi: Vec<Vec<(Poly, usize)>>,
}

impl HopfPresentation {
    pub fn trivial_comodule(&self) -> ComodulePresentation {
        ComodulePresentation {
            gens: vec![("e".to_string(), MultiDegree::zero(self.arity()))],
            psi_sources: vec![("e".to_string(), "1@e".to_string())],
        }
    }

    fn parse_comodule(&self, m: &ComodulePresentation) -> Result<ComoduleData, HopfError> {
        let mut degs = Vec::new();
        let mut psi = Vec::new();
        for (name, deg) in &m.gens {
            if deg.arity() != self.arity() {
                return Err(GradedError::ArityMismatch.into());
            }
            degs.push(deg.clone());
            let src = m
                .psi_sources
                .iter()
                .find(|(n, _)| n == name)
                .ok_or_else(|| GradedError::UnknownGenerator { name: name.clone() })?;
            let mut row = Vec::new();
            for part in split_summands(&src.1) {
                let pieces = split_at_depth0(&part, '@');
                if pieces.len() != 2 {
                    return Err(HopfError::BadTensor {
                        src: src.1.clone(),
                        msg: "coaction summands are `expr@generator`".into(),
                    });
                }
                let p = self.normalize(&self.combined.parse(pieces[0].trim())?)?;
                let tgt = pieces[1].trim();
                let k = m
                    .gens
                    .iter()
                    .position(|(n, _)| n == tgt)
                    .ok_or_else(|| GradedError::UnknownGenerator { name: tgt.into() })?;
                row.push((p, k));
            }
            psi.push(row);
        }
        Ok(ComoduleData { degs, psi })
    }

    /// Counit and coassociativity for a comodule's coaction.
    pub fn validate_comodule(
        &self,
        m: &ComodulePresentation,
    ) -> Result<ValidationReport, HopfError> {
        let data = self.parse_comodule(m)?;
        let mut rep = ValidationReport::default();
        let nv = self.nvars();
        for (j, (name, deg)) in m.gens.iter().enumerate() {
            // Homogeneity.
            for (p, k) in &data.psi[j] {
                match self.combined.degree_of(p) {
                    Ok(Some(pd)) if pd.add(&data.degs[*k]) == *deg => {}
                    Ok(None) => {}
                    Ok(Some(_)) | Err(GradedError::NonHomogeneous { .. }) => {
                        rep.failures.push(ValidationFailure {
                            law: "homogeneous".into(),
                            subject: format!("psi({})", name),
                            detail: self.combined.format_poly(p),
                        })
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            // (ε⊗id)ψ = id.
            for k in 0..m.gens.len() {
                let mut acc = Poly::zero();
                for (p, kk) in &data.psi[j] {
                    if *kk == k {
                        acc = acc.add(&self.eps_of_poly(p)?);
                    }
                }
                let acc = self.normalize(&acc)?;
                let want = if k == j {
                    Poly::constant(nv, BigRational::one())
                } else {
                    Poly::zero()
                };
                if acc != self.normalize(&want)? {
                    rep.failures.push(ValidationFailure {
                        law: "comodule-counit".into(),
                        subject: name.clone(),
                        detail: self.combined.format_poly(&acc),
                    });
                }
            }
            // (Δ⊗id)ψ = (id⊗ψ)ψ in straightened two-slot form with a
            // module index.
            let mut litems = Vec::new();
            let mut ritems = Vec::new();
            for (p, k) in &data.psi[j] {
                for (e, c) in &p.terms {
                    let (ap, gp) = mono_split(e, self.n_base);
                    let dg = self.delta_of_gamma_mono(&gp)?;
                    for ((a2, s2), c2) in &dg.terms {
                        litems.push(RawTerm {
                            c: c * c2,
                            a: mono_mul(&ap, a2),
                            slots: vec![s2[0].clone(), s2[1].clone()],
                            m: *k,
                        });
                    }
                }
                for (p2, k2) in &data.psi[*k] {
                    for (e, c) in &p.terms {
                        for (e2, c2) in &p2.terms {
                            ritems.push(RawTerm {
                                c: c * c2,
                                a: vec![0; nv],
                                slots: vec![e.clone(), e2.clone()],
                                m: *k2,
                            });
                        }
                    }
                }
            }
            let lhs = self.straighten(litems)?;
            let rhs = self.straighten(ritems)?;
            if lhs != rhs {
                rep.failures.push(ValidationFailure {
                    law: "comodule-coassociative".into(),
                    subject: name.clone(),
                    detail: "(Δ⊗id)ψ differs from (id⊗ψ)ψ".into(),
                });
            }
        }
        Ok(rep)
    }

    fn cell_basis(
        &self,
        data: &ComoduleData,
        s: usize,
        d: &MultiDegree,
    ) -> Result<Vec<CanonKey>, HopfError> {
        let mut keys = Vec::new();
        for (k, mdeg) in data.degs.iter().enumerate() {
            let rem = d.sub(mdeg);
            if rem.0.iter().any(|&x| x < 0) {
                continue;
            }
            for adeg in degree_box(&rem) {
                let amonos = self.base_monos_normal(&adeg)?;
                if amonos.is_empty() {
                    continue;
                }
                let tuples = self.slot_tuples(&rem.sub(&adeg), s)?;
                for a in &amonos {
                    for t in &tuples {
                        keys.push((a.clone(), t.clone(), k));
                    }
                }
            }
            if keys.len() > 20_000 {
                return Err(HopfError::WindowTooLarge);
            }
        }
        keys.sort();
        Ok(keys)
    }

    /// Alternating face sum of the normalized cobar differential on one
    /// basis element; degenerate straightened terms drop out.
    fn cobar_differential(
        &self,
        key: &CanonKey,
        data: &ComoduleData,
    ) -> Result<BTreeMap<CanonKey, BigRational>, HopfError> {
        let (a, slots, mj) = key;
        let s = slots.len();
        let nv = self.nvars();
        let mut items = Vec::new();
        // Face 0: insert the reduced right unit of the global coefficient.
        let mut etabar = self.eta_of_base_mono(a)?;
        etabar.add_term(a.clone(), &-BigRational::one());
        for (e, c) in &etabar.terms {
            let mut sl = Vec::with_capacity(s + 1);
            sl.push(e.clone());
            sl.extend(slots.iter().cloned());
            items.push(RawTerm { c: c.clone(), a: vec![0; nv], slots: sl, m: *mj });
        }
        // Faces 1..=s: diagonal on each slot.
        for i in 0..s {
            let sign = if (i + 1) % 2 == 0 {
                BigRational::one()
            } else {
                -BigRational::one()
            };
            let dg = self.delta_of_gamma_mono(&slots[i])?;
            for ((a2, s2), c2) in &dg.terms {
                let mut sl = Vec::with_capacity(s + 1);
                sl.extend(slots[..i].iter().cloned());
                sl.push(mono_mul(a2, &s2[0]));
                sl.push(s2[1].clone());
                sl.extend(slots[i + 1..].iter().cloned());
                items.push(RawTerm { c: &sign * c2, a: a.clone(), slots: sl, m: *mj });
            }
        }
        // Face s+1: the coaction on the module generator.
        let sign = if (s + 1) % 2 == 0 {
            BigRational::one()
        } else {
            -BigRational::one()
        };
        for (p, k) in &data.psi[*mj] {
            for (e, c) in &p.terms {
                let mut sl = Vec::with_capacity(s + 1);
                sl.extend(slots.iter().cloned());
                sl.push(e.clone());
                items.push(RawTerm { c: &sign * c, a: a.clone(), slots: sl, m: *k });
            }
        }
        let mut map = self.straighten(items)?;
        map.retain(|(_, sl, _), _| sl.iter().all(|m| m.iter().any(|&e| e > 0)));
        Ok(map)
    }

    fn cobar_matrix(
        &self,
        src: &[CanonKey],
        tgt: &[CanonKey],
        data: &ComoduleData,
    ) -> Result<Mat, HopfError> {
        let index: BTreeMap<&CanonKey, usize> =
            tgt.iter().enumerate().map(|(i, k)| (k, i)).collect();
        let mut mat = Mat::zero(tgt.len(), src.len());
        for (j, key) in src.iter().enumerate() {
            for (tkey, c) in self.cobar_differential(key, data)? {
                let i = *index
                    .get(&tkey)
                    .expect("differential image must land in the enumerated basis");
                mat.set(i, j, c);
            }
        }
        Ok(mat)
    }

    /// Cohomology of the normalized cobar complex over the window. The
    /// presentation must have been validated; the composite of consecutive
    /// differentials is verified to vanish on every cell.
    pub fn cobar_ext(
        &self,
        m: &ComodulePresentation,
        window: &ExtWindow,
    ) -> Result<ExtTable, HopfError> {
        if !self.validated.get() {
            return Err(HopfError::UnvalidatedInput);
        }
        for (j, g) in self.gamma.iter().enumerate() {
            if !self.epsilon[j].is_zero() {
                return Err(HopfError::UnsupportedEpsilon(g.name.clone()));
            }
        }
        let rep = self.validate_comodule(m)?;
        if !rep.is_ok() {
            let f = &rep.failures[0];
            return Err(HopfError::ComoduleInvalid(format!(
                "{} ({}): {}",
                f.law, f.subject, f.detail
            )));
        }
        if window.s_max > 12 || window.deg_max.arity() != self.arity() {
            return Err(HopfError::WindowTooLarge);
        }
        let degrees = degree_box(&window.deg_max);
        if degrees.len() > 4096 {
            return Err(HopfError::WindowTooLarge);
        }
        let data = self.parse_comodule(m)?;
        let dom = &self.base.coefficients;
        let mut entries = BTreeMap::new();
        for d in &degrees {
            // Bases for s = 0..=s_max+1 in this internal degree.
            let mut bases = Vec::new();
            for s in 0..=window.s_max + 1 {
                bases.push(self.cell_basis(&data, s, d)?);
            }
            let mut mats = Vec::new();
            for s in 0..=window.s_max {
                mats.push(self.cobar_matrix(&bases[s], &bases[s + 1], &data)?);
            }
            for s in 0..window.s_max {
                assert!(
                    mats[s + 1].mul(&mats[s]).is_zero(),
                    "cobar differential does not square to zero at {:?}",
                    d.0
                );
            }
            for s in 0..=window.s_max {
                let dim = bases[s].len();
                if dim == 0 {
                    entries.insert(
                        (s, d.0.clone()),
                        ExtEntry { group: GroupDescriptor::zero(), generators: Vec::new() },
                    );
                    continue;
                }
                let z = kernel_basis(&mats[s], dom);
                let b = if s == 0 {
                    Mat::zero(dim, 0)
                } else {
                    mats[s - 1].clone()
                };
                let sq = subquotient(&z, &b, dom)?;
                let labels: Vec<String> =
                    bases[s].iter().map(|k| self.cobar_key_label(k, m)).collect();
                let generators = sq
                    .gens
                    .iter()
                    .map(|(ord, v)| (ord.to_string(), format_with_labels(&labels, v)))
                    .collect();
                entries.insert(
                    (s, d.0.clone()),
                    ExtEntry { group: sq.descriptor, generators },
                );
            }
        }
        Ok(ExtTable {
            s_max: window.s_max,
            deg_max: window.deg_max.clone(),
            entries,
        })
    }

    fn cobar_key_label(&self, key: &CanonKey, m: &ComodulePresentation) -> String {
        let (a, slots, mj) = key;
        let alabel = self.combined.monomial_label(a);
        let mut out = String::new();
        if alabel != "1" {
            out.push_str(&alabel);
        }
        if !slots.is_empty() {
            if !out.is_empty() {
                out.push('*');
            }
            out.push('[');
            let ls: Vec<String> =
                slots.iter().map(|sl| self.combined.monomial_label(sl)).collect();
            out.push_str(&ls.join("|"));
            out.push(']');
        }
        if out.is_empty() {
            out.push('1');
        }
        if m.gens.len() > 1 {
            out.push('@');
            out.push_str(&m.gens[*mj].0);
        }
        out
    }

    /// Kernel of the coaction-versus-right-unit map in one degree: the
    /// primitive elements. Assembled directly rather than through the
    /// complex, as a cross-check on the s = 0 column.
    pub fn primitives(
        &self,
        m: &ComodulePresentation,
        d: &MultiDegree,
    ) -> Result<(GroupDescriptor, Vec<String>), HopfError> {
        let data = self.parse_comodule(m)?;
        let c0 = self.cell_basis(&data, 0, d)?;
        let c1 = self.cell_basis(&data, 1, d)?;
        let index: BTreeMap<&CanonKey, usize> =
            c1.iter().enumerate().map(|(i, k)| (k, i)).collect();
        let mut mat = Mat::zero(c1.len(), c0.len());
        for (j, (a, _, mj)) in c0.iter().enumerate() {
            let nv = self.nvars();
            let mut items = Vec::new();
            let mut etabar = self.eta_of_base_mono(a)?;
            etabar.add_term(a.clone(), &-BigRational::one());
            for (e, c) in &etabar.terms {
                items.push(RawTerm { c: c.clone(), a: vec![0; nv], slots: vec![e.clone()], m: *mj });
            }
            for (p, k) in &data.psi[*mj] {
                for (e, c) in &p.terms {
                    items.push(RawTerm { c: -c, a: a.clone(), slots: vec![e.clone()], m: *k });
                }
            }
            let mut map = self.straighten(items)?;
            map.retain(|(_, sl, _), _| sl.iter().all(|mm| mm.iter().any(|&e| e > 0)));
            for (tkey, c) in map {
                let i = *index.get(&tkey).expect("primitive obstruction in basis");
                mat.set(i, j, c);
            }
        }
        let dom = &self.base.coefficients;
        let z = kernel_basis(&mat, dom);
        let sq = subquotient(&z, &Mat::zero(c0.len(), 0), dom)?;
        let labels: Vec<String> = c0.iter().map(|k| self.cobar_key_label(k, m)).collect();
        let gens = sq
            .gens
            .iter()
            .map(|(_, v)| format_with_labels(&labels, v))
            .collect();
        Ok((sq.descriptor, gens))
    }
}

fn format_with_labels(labels: &[String], v: &[BigRational]) -> String {
    let mut out = String::new();
    for (i, c) in v.iter().enumerate() {
        if c.is_zero() {
            continue;
        }
        let mag = c.abs();
        let lead = if out.is_empty() {
            if c.is_negative() { "-".to_string() } else { String::new() }
        } else if c.is_negative() {
            " - ".to_string()
        } else {
            " + ".to_string()
        };
        out.push_str(&lead);
        if mag.is_one() && labels[i] != "1" {
            out.push_str(&labels[i]);
        } else if labels[i] == "1" {
            out.push_str(&format!("{}", mag));
        } else {
            out.push_str(&format!("{}*{}", mag, labels[i]));
        }
    }
    if out.is_empty() {
        out.push('0');
    }
    out
}

/// Per-generator outcome of the ideal invariance check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InvariantReport {
    pub checks: Vec<(String, bool)>,
}

impl InvariantReport {
    pub fn is_ok(&self) -> bool {
        self.checks.iter().all(|(_, ok)| *ok)
    }
}

/// How the generator killed by a change of cover is balanced: a polynomial
/// tower on one cover monomial, or an explicit finite list ("1" for the
/// identity).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Witness {
    Tower(String),
    List(Vec<String>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverSpec {
    pub kill: String,
    pub witness: Witness,
    pub check_to: i64,
}

pub struct CoverReport {
    pub presentation: HopfPresentation,
    pub eliminated: Vec<String>,
    pub validation: ValidationReport,
}

/// Algebra extension of the base carrying a coaction, for pushing the cover
/// structure onto a larger base.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComoduleAlgebra {
    pub gens: Vec<Generator>,
    pub relation_sources: Vec<String>,
    pub psi_sources: Vec<(String, String)>,
}

impl HopfPresentation {
    fn poly_to_vec(
        &self,
        p: &Poly,
        monos: &[Vec<u32>],
    ) -> Result<Vec<BigRational>, HopfError> {
        let index: BTreeMap<&Vec<u32>, usize> =
            monos.iter().enumerate().map(|(i, m)| (m, i)).collect();
        let mut v = vec![BigRational::zero(); monos.len()];
        for (e, c) in &p.terms {
            let i = index.get(e).ok_or_else(|| HopfError::BadTensor {
                src: self.combined.format_poly(p),
                msg: "element does not lie in the expected graded piece".into(),
            })?;
            v[*i] = c.clone();
        }
        Ok(v)
    }

    /// For each listed base generator g, decide whether the right unit sends
    /// g into the span of the ideal inside the cover: the condition for the
    /// quotient to inherit the structure maps.
    pub fn invariant_ideal_check(
        &self,
        ideal: &[&str],
    ) -> Result<InvariantReport, HopfError> {
        let mut constants: Vec<u64> = Vec::new();
        let mut gens: Vec<usize> = Vec::new();
        for entry in ideal {
            if let Ok(p) = entry.trim().parse::<u64>() {
                constants.push(p);
            } else {
                let i = self
                    .base
                    .generator_index(entry.trim())
                    .ok_or_else(|| GradedError::UnknownGenerator {
                        name: entry.trim().into(),
                    })?;
                gens.push(i);
            }
        }
        let mut checks = Vec::new();
        for &p in &constants {
            // η_R is A-linear on constants.
            checks.push((p.to_string(), true));
        }
        for &i in &gens {
            let g = &self.base.generators[i];
            let d = &g.degree;
            let monos = self.combined_monos_normal(d)?;
            let mut cols: Vec<Vec<BigRational>> = Vec::new();
            for &p in &constants {
                let pc = BigRational::from_integer(p.into());
                for j in 0..monos.len() {
                    let mut col = vec![BigRational::zero(); monos.len()];
                    col[j] = pc.clone();
                    cols.push(col);
                }
            }
            for &k in &gens {
                let dh = &self.base.generators[k].degree;
                let rem = d.sub(dh);
                if rem.0.iter().any(|&x| x < 0) {
                    continue;
                }
                for m in self.combined_monos_normal(&rem)? {
                    let mut e = m.clone();
                    e[k] += 1;
                    let q = self.normalize(&Poly {
                        terms: BTreeMap::from([(e, BigRational::one())]),
                    })?;
                    cols.push(self.poly_to_vec(&q, &monos)?);
                }
            }
            let v = self.poly_to_vec(&self.normalize(&self.eta_r[i])?, &monos)?;
            let dom = &self.base.coefficients;
            let ok = if cols.is_empty() {
                v.iter().all(|c| c.is_zero())
            } else {
                let mat = Mat::from_cols(monos.len(), &cols);
                column_span_basis(&mat, dom).contains(&v, dom)
            };
            checks.push((g.name.clone(), ok));
        }
        Ok(InvariantReport { checks })
    }
}

/// Textual form of a presentation while generators are being eliminated or
/// killed; every operation is parse, substitute, reprint.
struct SourceSet {
    coefficients: Coefficients,
    base_gens: Vec<Generator>,
    base_rels: Vec<String>,
    gamma_gens: Vec<Generator>,
    gamma_rels: Vec<String>,
    eta: Vec<(String, String)>,
    eps: Vec<(String, String)>,
    delta: Vec<(String, String)>,
}

impl SourceSet {
    fn from_presentation(h: &HopfPresentation, coefficients: Coefficients) -> SourceSet {
        SourceSet {
            coefficients,
            base_gens: h.base.generators.clone(),
            base_rels: h.base.relation_sources.clone(),
            gamma_gens: h.gamma.clone(),
            gamma_rels: h.gamma_relation_sources.clone(),
            eta: h.eta_r_sources.clone(),
            eps: h.epsilon_sources.clone(),
            delta: h.delta_sources.clone(),
        }
    }

    fn scratch(&self) -> Result<RingPresentation, HopfError> {
        let mut gens = self.base_gens.clone();
        gens.extend(self.gamma_gens.iter().cloned());
        Ok(RingPresentation::new(
            self.coefficients.clone(),
            gens,
            Vec::new(),
        )?)
    }

    /// Replace one variable by a polynomial image in every stored source and
    /// drop the variable. The image must not mention the variable.
    fn substitute_and_drop(&mut self, var: usize, image: &Poly) -> Result<(), HopfError> {
        let ring = self.scratch()?;
        let nv = ring.nvars();
        let mut images: Vec<Poly> = (0..nv).map(|i| Poly::variable(nv, i)).collect();
        images[var] = image.clone();
        let name = if var < self.base_gens.len() {
            self.base_gens[var].name.clone()
        } else {
            self.gamma_gens[var - self.base_gens.len()].name.clone()
        };
        let subst_poly = |src: &str| -> Result<String, HopfError> {
            let p = ring.parse(src)?;
            Ok(ring.format_poly(&p.substitute(&images, nv)))
        };
        for rel in self.base_rels.iter_mut().chain(self.gamma_rels.iter_mut()) {
            *rel = subst_poly(rel)?;
        }
        for (_, img) in self.eta.iter_mut().chain(self.eps.iter_mut()) {
            *img = subst_poly(img)?;
        }
        for (_, src) in self.delta.iter_mut() {
            let mut parts = Vec::new();
            for part in split_summands(src) {
                let pieces = split_at_depth0(&part, '@');
                if pieces.len() != 2 {
                    return Err(HopfError::BadTensor {
                        src: src.clone(),
                        msg: "tensor summands are `left@right`".into(),
                    });
                }
                let l = ring.parse(pieces[0].trim())?.substitute(&images, nv);
                let r = ring.parse(pieces[1].trim())?.substitute(&images, nv);
                if l.is_zero() || r.is_zero() {
                    continue;
                }
                parts.push(format!(
                    "({})@({})",
                    ring.format_poly(&l),
                    ring.format_poly(&r)
                ));
            }
            *src = if parts.is_empty() {
                format!("0@{}", self.gamma_gens[0].name)
            } else {
                parts.join(" + ")
            };
        }
        if var < self.base_gens.len() {
            self.base_gens.remove(var);
            self.eta.retain(|(n, _)| *n != name);
        } else {
            self.gamma_gens.remove(var - self.base_gens.len());
            self.eps.retain(|(n, _)| *n != name);
            self.delta.retain(|(n, _)| *n != name);
        }
        Ok(())
    }

    /// Remove generators that occur linearly and alone in some relation,
    /// rewriting everything else through the solved value. Base relations
    /// may only eliminate base generators; cover relations only cover
    /// generators.
    fn eliminate(&mut self) -> Result<Vec<String>, HopfError> {
        let mut eliminated = Vec::new();
        loop {
            let ring = self.scratch()?;
            let nb = self.base_gens.len();
            let mut rels: Vec<(bool, usize, Poly)> = Vec::new();
            for (i, src) in self.base_rels.iter().enumerate() {
                rels.push((true, i, reduce_poly(&self.coefficients, &ring.parse(src)?)));
            }
            for (i, src) in self.gamma_rels.iter().enumerate() {
                rels.push((false, i, reduce_poly(&self.coefficients, &ring.parse(src)?)));
            }
            let mut best: Option<(usize, bool, usize, Poly)> = None;
            for (is_base, idx, p) in &rels {
                for (e, c) in &p.terms {
                    let nz: Vec<usize> =
                        (0..e.len()).filter(|&i| e[i] > 0).collect();
                    if nz.len() != 1 || e[nz[0]] != 1 || !self.coefficients.is_unit(c) {
                        continue;
                    }
                    let v = nz[0];
                    if *is_base && v >= nb {
                        continue;
                    }
                    if !*is_base && v < nb {
                        continue;
                    }
                    if p.terms.iter().any(|(e2, _)| e2 != e && e2[v] > 0) {
                        continue;
                    }
                    let mut rest = p.clone();
                    rest.add_term(e.clone(), &-c.clone());
                    let image = rest.neg().scale(&c.recip());
                    if best.as_ref().map_or(true, |(bv, ..)| v > *bv) {
                        best = Some((v, *is_base, *idx, image));
                    }
                }
            }
            let Some((v, is_base, idx, image)) = best else { break };
            if is_base {
                self.base_rels.remove(idx);
            } else {
                self.gamma_rels.remove(idx);
            }
            eliminated.push(if v < nb {
                self.base_gens[v].name.clone()
            } else {
                self.gamma_gens[v - nb].name.clone()
            });
            self.substitute_and_drop(v, &image)?;
        }
        Ok(eliminated)
    }

    fn build(self) -> Result<HopfPresentation, HopfError> {
        let base = RingPresentation::new(
            self.coefficients,
            self.base_gens,
            self.base_rels,
        )?;
        HopfPresentation::new(
            base,
            self.gamma_gens,
            self.gamma_rels,
            self.eta,
            self.eps,
            self.delta,
        )
    }
}

fn drop_exponent(e: &[u32], k: usize) -> Vec<u32> {
    let mut out = e.to_vec();
    out.remove(k);
    out
}

impl HopfPresentation {
    fn witness_degrees(
        &self,
        w: &Witness,
        check_to: i64,
    ) -> Result<Vec<MultiDegree>, HopfError> {
        let one = MultiDegree::zero(self.arity());
        let mono_degree = |src: &str| -> Result<MultiDegree, HopfError> {
            let p = self.combined.parse(src.trim())?;
            if p.terms.len() != 1 {
                return Err(HopfError::BadTensor {
                    src: src.into(),
                    msg: "witness entries must be single monomials".into(),
                });
            }
            Ok(self.combined.monomial_degree(p.terms.keys().next().unwrap()))
        };
        match w {
            Witness::List(items) => items
                .iter()
                .map(|s| {
                    if s.trim() == "1" {
                        Ok(one.clone())
                    } else {
                        mono_degree(s)
                    }
                })
                .collect(),
            Witness::Tower(name) => {
                let d0 = mono_degree(name)?;
                if d0.0[0] <= 0 {
                    return Err(HopfError::BadTensor {
                        src: name.clone(),
                        msg: "tower witness needs positive leading degree".into(),
                    });
                }
                let mut out = Vec::new();
                let mut i = 0i64;
                while i * d0.0[0] <= check_to {
                    out.push(d0.scale(i));
                    i += 1;
                }
                Ok(out)
            }
        }
    }

    /// The rank bookkeeping behind a change of cover: with the killed
    /// generator set to zero, base-normal times cover-normal monomial counts
    /// must match the original base shifted by the witness degrees, in every
    /// degree along the leading grading up to the horizon.
    fn cover_witness_check(
        &self,
        kill: usize,
        wdegs: &[MultiDegree],
        check_to: i64,
    ) -> Result<(), HopfError> {
        let nb = self.n_base;
        let coeffs = &self.base.coefficients;
        // Base relations with the killed generator set to zero, in the
        // shrunken exponent space.
        let images: Vec<Poly> = (0..nb)
            .map(|i| {
                if i == kill {
                    Poly::zero()
                } else {
                    Poly::variable(nb, i)
                }
            })
            .collect();
        let mut snap_rels = Vec::new();
        let mut snap_srcs = Vec::new();
        for (rel, src) in self.base.relations.iter().zip(&self.base.relation_sources) {
            let q = reduce_poly(coeffs, &rel.substitute(&images, nb));
            let mut out = Poly::zero();
            for (e, c) in &q.terms {
                assert_eq!(e[kill], 0);
                out.add_term(drop_exponent(e, kill), c);
            }
            snap_rels.push(out);
            snap_srcs.push(src.clone());
        }
        let mut snap_gens = self.base.generators.clone();
        snap_gens.remove(kill);
        let n_snap = snap_gens.len();
        let snap_base = RingPresentation::new(coeffs.clone(), snap_gens, Vec::new())?;
        let base_rules = derive_rules(&snap_rels, &snap_srcs, coeffs)?;
        // Cover relations with the killed generator set to zero, in the
        // shrunken combined space.
        let nv = self.nvars();
        let cimages: Vec<Poly> = (0..nv)
            .map(|i| {
                if i == kill {
                    Poly::zero()
                } else {
                    Poly::variable(nv, i)
                }
            })
            .collect();
        let mut grels = Vec::new();
        let mut gsrcs = Vec::new();
        for (rel, src) in self.gamma_relations.iter().zip(&self.gamma_relation_sources) {
            let q = reduce_poly(coeffs, &rel.substitute(&cimages, nv));
            let mut out = Poly::zero();
            for (e, c) in &q.terms {
                assert_eq!(e[kill], 0);
                out.add_term(drop_exponent(e, kill), c);
            }
            grels.push(out);
            gsrcs.push(src.clone());
        }
        let gamma_rules = derive_rules(&grels, &gsrcs, coeffs)?;
        let snap_count = |d: &MultiDegree| -> Result<usize, HopfError> {
            let mut n = 0;
            for m in snap_base.monomials_of_degree(d)? {
                if base_rules.iter().all(|r| r.var >= n_snap || m[r.var] < r.power) {
                    n += 1;
                }
            }
            Ok(n)
        };
        let gamma_count = |d: &MultiDegree| -> Result<usize, HopfError> {
            match &self.gamma_only {
                None => Ok(if d.0.iter().all(|&x| x == 0) { 1 } else { 0 }),
                Some(go) => {
                    let mut n = 0;
                    for m in go.monomials_of_degree(d)? {
                        let ok = gamma_rules.iter().all(|r| {
                            if r.var < n_snap {
                                true
                            } else {
                                m[r.var - n_snap] < r.power
                            }
                        });
                        if ok {
                            n += 1;
                        }
                    }
                    Ok(n)
                }
            }
        };
        for t in 0..=check_to {
            let mut d = MultiDegree::zero(self.arity());
            d.0[0] = t;
            let mut lhs = 0usize;
            for e in degree_box(&d) {
                let a = snap_count(&e)?;
                if a == 0 {
                    continue;
                }
                lhs += a * gamma_count(&d.sub(&e))?;
            }
            let mut rhs = 0usize;
            for w in wdegs {
                let rem = d.sub(w);
                if rem.0.iter().any(|&x| x < 0) {
                    continue;
                }
                rhs += self.base_monos_normal(&rem)?.len();
            }
            if lhs != rhs {
                return Err(HopfError::WitnessFails { degree: d.0 });
            }
        }
        Ok(())
    }

    /// Pass to a smaller cover: verify the witness bookkeeping, set the named
    /// base generator to zero, record its right unit as a new cover relation,
    /// and eliminate the generators that become solvable.
    pub fn change_of_cover(&self, spec: &CoverSpec) -> Result<CoverReport, HopfError> {
        let ki = self
            .base
            .generator_index(&spec.kill)
            .ok_or_else(|| GradedError::UnknownGenerator { name: spec.kill.clone() })?;
        let wdegs = self.witness_degrees(&spec.witness, spec.check_to)?;
        self.cover_witness_check(ki, &wdegs, spec.check_to)?;
        let mut ss = SourceSet::from_presentation(self, self.base.coefficients.clone());
        let eta_src = self
            .eta_r_sources
            .iter()
            .find(|(n, _)| *n == spec.kill)
            .expect("base generator has a right-unit source")
            .1
            .clone();
        ss.gamma_rels.push(eta_src);
        ss.substitute_and_drop(ki, &Poly::zero())?;
        let mut eliminated = ss.eliminate()?;
        eliminated.retain(|n| *n != spec.kill);
        let presentation = ss.build()?;
        let validation = presentation.validate()?;
        Ok(CoverReport { presentation, eliminated, validation })
    }

    /// Quotient by an invariant ideal generated by at most one prime and a
    /// set of base generators.
    pub fn mod_invariant_ideal(&self, ideal: &[&str]) -> Result<HopfPresentation, HopfError> {
        let report = self.invariant_ideal_check(ideal)?;
        if let Some((name, _)) = report.checks.iter().find(|(_, ok)| !ok) {
            return Err(HopfError::NotInvariant(name.clone()));
        }
        let mut constants: Vec<u64> = Vec::new();
        let mut names: Vec<String> = Vec::new();
        for entry in ideal {
            if let Ok(p) = entry.trim().parse::<u64>() {
                constants.push(p);
            } else {
                names.push(entry.trim().to_string());
            }
        }
        constants.sort();
        constants.dedup();
        if constants.len() > 1 {
            return Err(HopfError::UnsupportedIdealShape(
                "at most one prime constant".into(),
            ));
        }
        let coeffs = match constants.first() {
            None => self.base.coefficients.clone(),
            Some(&p) => match &self.base.coefficients {
                Coefficients::Int => Coefficients::Fp { p },
                Coefficients::LocalAt { p: q } if *q == p => Coefficients::Fp { p },
                Coefficients::Inverted { primes } if !primes.contains(&p) => {
                    Coefficients::Fp { p }
                }
                Coefficients::Fp { p: q } if *q == p => Coefficients::Fp { p },
                other => {
                    return Err(HopfError::UnsupportedIdealShape(format!(
                        "the prime {} is invertible in {:?}",
                        p, other
                    )))
                }
            },
        };
        let mut ss = SourceSet::from_presentation(self, coeffs);
        // Record the right units of the killed generators as cover
        // relations, then set the generators to zero everywhere.
        for name in &names {
            let src = self
                .eta_r_sources
                .iter()
                .find(|(n, _)| n == name)
                .expect("invariance check resolved the name")
                .1
                .clone();
            ss.gamma_rels.push(src);
        }
        for name in &names {
            let ring = ss.scratch()?;
            let vi = ring
                .generator_index(name)
                .ok_or_else(|| GradedError::UnknownGenerator { name: name.clone() })?;
            ss.substitute_and_drop(vi, &Poly::zero())?;
        }
        ss.eliminate()?;
        ss.build()
    }

    /// Extend the base along a comodule algebra; its coaction becomes part of
    /// the right unit.
    pub fn base_change_comodule(
        &self,
        alg: &ComoduleAlgebra,
    ) -> Result<HopfPresentation, HopfError> {
        let mut gens = self.base.generators.clone();
        for g in &alg.gens {
            if gens.iter().any(|h| h.name == g.name)
                || self.gamma.iter().any(|h| h.name == g.name)
            {
                return Err(HopfError::ComoduleInvalid(format!(
                    "generator name {} already in use",
                    g.name
                )));
            }
            gens.push(g.clone());
        }
        let mut rels = self.base.relation_sources.clone();
        rels.extend(alg.relation_sources.iter().cloned());
        let base = RingPresentation::new(self.base.coefficients.clone(), gens, rels)?;
        let mut eta = self.eta_r_sources.clone();
        eta.extend(alg.psi_sources.iter().cloned());
        HopfPresentation::new(
            base,
            self.gamma.clone(),
            self.gamma_relation_sources.clone(),
            eta,
            self.epsilon_sources.clone(),
            self.delta_sources.clone(),
        )
    }

    /// Structural equality after normalization: same generators, rewrite
    /// rules, and structure maps.
    pub fn same_presentation(&self, other: &HopfPresentation) -> bool {
        let gen_eq = |a: &[Generator], b: &[Generator]| {
            a.len() == b.len()
                && a.iter().zip(b).all(|(x, y)| {
                    x.name == y.name && x.degree == y.degree && x.inverted == y.inverted
                })
        };
        self.base.coefficients == other.base.coefficients
            && gen_eq(&self.base.generators, &other.base.generators)
            && gen_eq(&self.gamma, &other.gamma)
            && self.rules == other.rules
            && self.eta_r == other.eta_r
            && self.epsilon == other.epsilon
            && self.delta == other.delta
    }
}

#[derive(Serialize, Deserialize)]
struct HopfJson {
    coefficients: Coefficients,
    base_generators: Vec<Generator>,
    base_relations: Vec<String>,
    gamma_generators: Vec<Generator>,
    gamma_relations: Vec<String>,
    eta: Vec<(String, String)>,
    epsilon: Vec<(String, String)>,
    delta: Vec<(String, String)>,
}

impl HopfPresentation {
    pub fn to_json(&self) -> String {
        let j = HopfJson {
            coefficients: self.base.coefficients.clone(),
            base_generators: self.base.generators.clone(),
            base_relations: self.base.relation_sources.clone(),
            gamma_generators: self.gamma.clone(),
            gamma_relations: self.gamma_relation_sources.clone(),
            eta: self.eta_r_sources.clone(),
            epsilon: self.epsilon_sources.clone(),
            delta: self.delta_sources.clone(),
        };
        serde_json::to_string_pretty(&j).expect("presentation serializes")
    }

    pub fn from_json(src: &str) -> Result<HopfPresentation, HopfError> {
        let j: HopfJson =
            serde_json::from_str(src).map_err(|e| HopfError::BadJson(e.to_string()))?;
        let base =
            RingPresentation::new(j.coefficients, j.base_generators, j.base_relations)?;
        HopfPresentation::new(
            base,
            j.gamma_generators,
            j.gamma_relations,
            j.eta,
            j.epsilon,
            j.delta,
        )
    }
}

fn gen2(name: &str, t: i64, u: i64) -> Generator {
    Generator {
        name: name.to_string(),
        degree: MultiDegree(vec![t, u]),
        inverted: false,
    }
}

fn pairs(items: &[(&str, &str)]) -> Vec<(String, String)> {
    items
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect()
}

/// Generic cubic-curve coordinate changes over the integers: the full
/// five-parameter base with the three-parameter cover.
pub fn weierstrass_full() -> Result<HopfPresentation, HopfError> {
    let base = RingPresentation::new(
        Coefficients::Int,
        vec![
            gen2("a1", 2, 0),
            gen2("a2", 4, 0),
            gen2("a3", 6, 0),
            gen2("a4", 8, 0),
            gen2("a6", 12, 0),
        ],
        Vec::new(),
    )?;
    HopfPresentation::new(
        base,
        vec![gen2("r", 4, 0), gen2("s", 2, 0), gen2("t", 6, 0)],
        Vec::new(),
        pairs(&[
            ("a1", "a1 + 2*s"),
            ("a2", "a2 - s*a1 + 3*r - s^2"),
            ("a3", "a3 + r*a1 + 2*t"),
            ("a4", "a4 - s*a3 + 2*r*a2 - (t + r*s)*a1 + 3*r^2 - 2*s*t"),
            ("a6", "a6 + r*a4 + r^2*a2 + r^3 - t*a3 - t^2 - r*t*a1"),
        ]),
        pairs(&[("r", "0"), ("s", "0"), ("t", "0")]),
        pairs(&[
            ("r", "r@1 + 1@r"),
            ("s", "s@1 + 1@s"),
            ("t", "t@1 + 1@t + s@r"),
        ]),
    )
}

/// The 2-local curve presentation with the second coefficient already
/// absorbed: translation is constrained to keep it at zero.
pub fn weier_tilde_p2() -> Result<HopfPresentation, HopfError> {
    let base = RingPresentation::new(
        Coefficients::LocalAt { p: 2 },
        vec![
            gen2("a1", 2, 0),
            gen2("a3", 6, 0),
            gen2("a4", 8, 0),
            gen2("a6", 12, 0),
        ],
        Vec::new(),
    )?;
    let r = "(1/3*(s^2 + a1*s))";
    HopfPresentation::new(
        base,
        vec![gen2("s", 2, 0), gen2("t", 6, 0)],
        Vec::new(),
        pairs(&[
            ("a1", "a1 + 2*s"),
            ("a3", &format!("a3 + {r}*a1 + 2*t")),
            (
                "a4",
                &format!("a4 - s*a3 - (t + {r}*s)*a1 + 3*{r}^2 - 2*s*t"),
            ),
            (
                "a6",
                &format!("a6 + {r}*a4 + {r}^3 - t*a3 - t^2 - {r}*t*a1"),
            ),
        ]),
        pairs(&[("s", "0"), ("t", "0")]),
        pairs(&[
            ("s", "s@1 + 1@s"),
            ("t", &format!("t@1 + 1@t + s@{r}")),
        ]),
    )
}

/// First reduced cover at 2: one translation parameter, no relation yet.
pub fn weier_prime_p2() -> Result<HopfPresentation, HopfError> {
    let base = RingPresentation::new(
        Coefficients::LocalAt { p: 2 },
        vec![
            gen2("a1", 2, 0),
            gen2("a3", 6, 0),
            gen2("a4", 8, 0),
            gen2("x", 4, 0),
        ],
        Vec::new(),
    )?;
    let r = "(1/3*(s^2 + a1*s))";
    HopfPresentation::new(
        base,
        vec![gen2("s", 2, 0)],
        Vec::new(),
        pairs(&[
            ("a1", "a1 + 2*s"),
            ("a3", "a3 + 1/3*(a1 + 2*s)*(s^2 + a1*s) - 2*s*x"),
            ("a4", "a4 - a3*s + (a1 + 2*s)*s*x - 1/3*(s^2 + a1*s)^2"),
            ("x", &format!("x - {r}")),
        ]),
        pairs(&[("s", "0")]),
        pairs(&[("s", "s@1 + 1@s")]),
    )
}

/// Second reduced cover at 2: the translation parameter squares to a
/// multiple of itself.
pub fn weier_doubleprime_p2() -> Result<HopfPresentation, HopfError> {
    let base = RingPresentation::new(
        Coefficients::LocalAt { p: 2 },
        vec![gen2("a1", 2, 0), gen2("a3", 6, 0), gen2("a4", 8, 0)],
        Vec::new(),
    )?;
    HopfPresentation::new(
        base,
        vec![gen2("s", 2, 0)],
        vec!["s^2 + a1*s".to_string()],
        pairs(&[
            ("a1", "a1 + 2*s"),
            ("a3", "a3"),
            ("a4", "a4 - a3*s"),
        ]),
        pairs(&[("s", "0")]),
        pairs(&[("s", "s@1 + 1@s")]),
    )
}

/// Mod-2 exterior quotient of the reduced cover.
pub fn b1() -> Result<HopfPresentation, HopfError> {
    let base = RingPresentation::new(
        Coefficients::Fp { p: 2 },
        vec![gen2("a3", 6, 0), gen2("a4", 8, 0)],
        Vec::new(),
    )?;
    HopfPresentation::new(
        base,
        vec![gen2("s", 2, 0)],
        vec!["s^2".to_string()],
        pairs(&[("a3", "a3"), ("a4", "a4 + a3*s")]),
        pairs(&[("s", "0")]),
        pairs(&[("s", "s@1 + 1@s")]),
    )
}

/// Curve presentation away from 2, with the curve carried in the base and a
/// single translation parameter.
pub fn weier_odd() -> Result<HopfPresentation, HopfError> {
    let base = RingPresentation::new(
        Coefficients::Inverted {
            primes: std::iter::once(2).collect(),
        },
        vec![
            gen2("b2", 4, 0),
            gen2("b4", 8, 0),
            gen2("b6", 12, 0),
            gen2("x", 4, 0),
            gen2("y", 6, 0),
        ],
        vec!["y^2 - 4*x^3 - b2*x^2 - 2*b4*x - b6".to_string()],
    )?;
    HopfPresentation::new(
        base,
        vec![gen2("r", 4, 0)],
        Vec::new(),
        pairs(&[
            ("b2", "b2 + 12*r"),
            ("b4", "b4 + b2*r + 6*r^2"),
            ("b6", "b6 + 2*b4*r + b2*r^2 + 4*r^3"),
            ("x", "x - r"),
            ("y", "y"),
        ]),
        pairs(&[("r", "0")]),
        pairs(&[("r", "r@1 + 1@r")]),
    )
}

/// The coordinate algebra of the curve, as a comodule algebra over the
/// 2-local reduced presentation.
pub fn h_w_inf_algebra() -> ComoduleAlgebra {
    ComoduleAlgebra {
        gens: vec![gen2("x", 4, 0), gen2("y", 6, 0)],
        relation_sources: vec![
            "y^2 + a1*x*y + a3*y - x^3 - a4*x - a6".to_string(),
        ],
        psi_sources: pairs(&[
            ("x", "x - 1/3*(s^2 + a1*s)"),
            ("y", "y - s*x + s*(1/3*(s^2 + a1*s)) - t"),
        ]),
    }
}

/// Weighted version over the full presentation, with the scaling tracked in
/// the second grading.
pub fn h_w_star_algebra() -> ComoduleAlgebra {
    ComoduleAlgebra {
        gens: vec![gen2("a", 0, 1), gen2("x", 4, 2), gen2("y", 6, 3)],
        relation_sources: vec![
            "y^2 + a1*a*x*y + a3*a^3*y - x^3 - a2*a^2*x^2 - a4*a^4*x - a6*a^6"
                .to_string(),
        ],
        psi_sources: pairs(&[
            ("a", "a"),
            ("x", "x - a^2*r"),
            ("y", "y - a*s*x + a^3*(s*r - t)"),
        ]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn validated(h: HopfPresentation) -> HopfPresentation {
        let rep = h.validate().expect("validation runs");
        assert!(rep.is_ok(), "structure laws fail: {:?}", rep.failures);
        h
    }

    fn canon2(
        h: &HopfPresentation,
        src: &str,
    ) -> BTreeMap<CanonKey, BigRational> {
        let triples = h.parse_tensor2(src).expect("parses");
        let nv = h.nvars();
        let mut items = Vec::new();
        for (c, l, r) in &triples {
            for (el, cl) in &l.terms {
                for (er, cr) in &r.terms {
                    items.push(RawTerm {
                        c: c * cl * cr,
                        a: vec![0; nv],
                        slots: vec![el.clone(), er.clone()],
                        m: 0,
                    });
                }
            }
        }
        h.straighten(items).expect("straightens")
    }

    #[test]
    fn straightener_moves_base_through_right_unit() {
        let h = weierstrass_full().unwrap();
        assert_eq!(canon2(&h, "1@a1*s"), canon2(&h, "a1@s + 2*s@s"));
        // Slot-zero base content becomes a global coefficient directly.
        let lhs = canon2(&h, "a1*s@t");
        assert_eq!(lhs.len(), 1);
        let ((a, slots, _), c) = lhs.iter().next().unwrap();
        assert_eq!(h.combined.monomial_label(a), "a1");
        assert_eq!(h.combined.monomial_label(&slots[0]), "s");
        assert_eq!(h.combined.monomial_label(&slots[1]), "t");
        assert!(c.is_one());
    }

    #[test]
    fn shipped_presentations_validate() {
        validated(weierstrass_full().unwrap());
        validated(weier_tilde_p2().unwrap());
        validated(weier_prime_p2().unwrap());
        validated(weier_doubleprime_p2().unwrap());
        validated(b1().unwrap());
        validated(weier_odd().unwrap());
    }

    #[test]
    fn wrong_counit_fails_validation() {
        let base = RingPresentation::new(
            Coefficients::LocalAt { p: 2 },
            vec![gen2("a1", 2, 0), gen2("a3", 6, 0), gen2("a4", 8, 0)],
            Vec::new(),
        )
        .unwrap();
        let h = HopfPresentation::new(
            base,
            vec![gen2("s", 2, 0)],
            vec!["s^2 + a1*s".to_string()],
            pairs(&[("a1", "a1 + 2*s"), ("a3", "a3"), ("a4", "a4 - a3*s")]),
            pairs(&[("s", "1")]),
            pairs(&[("s", "s@1 + 1@s")]),
        )
        .unwrap();
        let rep = h.validate().unwrap();
        assert!(!rep.is_ok());
        assert!(rep.failures.iter().any(|f| f.law.starts_with("counit")));
    }

    #[test]
    fn inhomogeneous_coaction_fails_validation() {
        let mut alg = h_w_star_algebra();
        for (name, src) in alg.psi_sources.iter_mut() {
            if name == "y" {
                *src = "y - a*s*x + a^2*(s*r - t)".to_string();
            }
        }
        let h = weierstrass_full().unwrap().base_change_comodule(&alg).unwrap();
        let rep = h.validate().unwrap();
        assert!(rep
            .failures
            .iter()
            .any(|f| f.law == "homogeneous" && f.subject.contains('y')));
    }

    #[test]
    fn right_unit_must_preserve_relations() {
        let base = RingPresentation::new(
            Coefficients::Inverted {
                primes: std::iter::once(2).collect(),
            },
            vec![
                gen2("b2", 4, 0),
                gen2("b4", 8, 0),
                gen2("b6", 12, 0),
                gen2("x", 4, 0),
                gen2("y", 6, 0),
            ],
            vec!["y^2 - 4*x^3 - b2*x^2 - 2*b4*x - b6".to_string()],
        )
        .unwrap();
        let h = HopfPresentation::new(
            base,
            vec![gen2("r", 4, 0)],
            Vec::new(),
            pairs(&[
                ("b2", "b2 + 12*r"),
                ("b4", "b4 + b2*r + 5*r^2"),
                ("b6", "b6 + 2*b4*r + b2*r^2 + 4*r^3"),
                ("x", "x - r"),
                ("y", "y"),
            ]),
            pairs(&[("r", "0")]),
            pairs(&[("r", "r@1 + 1@r")]),
        )
        .unwrap();
        let rep = h.validate().unwrap();
        assert!(rep
            .failures
            .iter()
            .any(|f| f.law == "eta-preserves-relation"));
    }

    #[test]
    fn trivial_cover_ext_is_the_base() {
        let base = RingPresentation::new(
            Coefficients::Int,
            vec![gen2("c", 4, 0)],
            Vec::new(),
        )
        .unwrap();
        let h = validated(
            HopfPresentation::new(
                base.clone(),
                Vec::new(),
                Vec::new(),
                pairs(&[("c", "c")]),
                Vec::new(),
                Vec::new(),
            )
            .unwrap(),
        );
        let table = h
            .cobar_ext(
                &h.trivial_comodule(),
                &ExtWindow { s_max: 2, deg_max: MultiDegree(vec![8, 0]) },
            )
            .unwrap();
        for t in 0..=8i64 {
            let expect = if t % 4 == 0 { 1 } else { 0 };
            assert_eq!(table.group(0, &[t, 0]).free, expect, "t={}", t);
            assert!(table.group(1, &[t, 0]).is_zero());
            assert!(table.group(2, &[t, 0]).is_zero());
        }
    }

    #[test]
    fn comodule_validation_catches_bad_coaction() {
        let h = validated(b1().unwrap());
        let m = ComodulePresentation {
            gens: vec![("e".to_string(), MultiDegree(vec![0, 0]))],
            psi_sources: vec![("e".to_string(), "1@e + s@e".to_string())],
        };
        let rep = h.validate_comodule(&m).unwrap();
        assert!(rep
            .failures
            .iter()
            .any(|f| f.law == "comodule-coassociative"
                || f.law == "homogeneous"));
    }

    /// Frozen small answer: cohomology of the mod-2 exterior cover is a
    /// polynomial algebra on the class of [s], the degree-6 base generator,
    /// and the square of the degree-8 one, modulo one product vanishing.
    #[test]
    fn b1_ext_window_matches_polynomial_answer() {
        let h = validated(b1().unwrap());
        let table = h
            .cobar_ext(
                &h.trivial_comodule(),
                &ExtWindow { s_max: 4, deg_max: MultiDegree(vec![24, 0]) },
            )
            .unwrap();
        let model = RingPresentation::new(
            Coefficients::Fp { p: 2 },
            vec![
                Generator {
                    name: "h1".into(),
                    degree: MultiDegree(vec![1, 2, 0]),
                    inverted: false,
                },
                Generator {
                    name: "v6".into(),
                    degree: MultiDegree(vec![0, 6, 0]),
                    inverted: false,
                },
                Generator {
                    name: "v16".into(),
                    degree: MultiDegree(vec![0, 16, 0]),
                    inverted: false,
                },
            ],
            vec!["v6*h1".to_string()],
        )
        .unwrap();
        for s in 0..=4usize {
            for t in 0..=24i64 {
                let want = model
                    .graded_piece(&MultiDegree(vec![s as i64, t, 0]))
                    .unwrap()
                    .group;
                let got = table.group(s, &[t, 0]);
                assert_eq!(got, want, "s={} t={}", s, t);
            }
        }
        let labels = |s: usize, t: i64| -> Vec<String> {
            table
                .entries
                .get(&(s, vec![t, 0]))
                .unwrap()
                .generators
                .iter()
                .map(|(_, l)| l.clone())
                .collect()
        };
        assert_eq!(labels(0, 6), vec!["a3"]);
        assert_eq!(labels(1, 2), vec!["[s]"]);
        assert!(labels(1, 8).is_empty());
        assert_eq!(labels(2, 4), vec!["[s|s]"]);
    }

    /// Frozen window: cohomology of the reduced 2-local cover agrees with
    /// the known integral presentation on generators b2, b3, b4, b8, h1.
    #[test]
    fn doubleprime_ext_window_matches_known_presentation() {
        let h = validated(weier_doubleprime_p2().unwrap());
        let table = h
            .cobar_ext(
                &h.trivial_comodule(),
                &ExtWindow { s_max: 3, deg_max: MultiDegree(vec![20, 0]) },
            )
            .unwrap();
        let model = RingPresentation::new(
            Coefficients::LocalAt { p: 2 },
            vec![
                Generator {
                    name: "b2".into(),
                    degree: MultiDegree(vec![0, 4, 0]),
                    inverted: false,
                },
                Generator {
                    name: "b3".into(),
                    degree: MultiDegree(vec![0, 6, 0]),
                    inverted: false,
                },
                Generator {
                    name: "b4".into(),
                    degree: MultiDegree(vec![0, 8, 0]),
                    inverted: false,
                },
                Generator {
                    name: "b8".into(),
                    degree: MultiDegree(vec![0, 16, 0]),
                    inverted: false,
                },
                Generator {
                    name: "h1".into(),
                    degree: MultiDegree(vec![1, 2, 0]),
                    inverted: false,
                },
            ],
            vec![
                "2*h1".to_string(),
                "b3*h1".to_string(),
                "b4*h1".to_string(),
                "4*b8 + b4^2 - b2*b3^2".to_string(),
            ],
        )
        .unwrap();
        for s in 0..=3usize {
            for t in 0..=20i64 {
                let want = model
                    .graded_piece(&MultiDegree(vec![s as i64, t, 0]))
                    .unwrap()
                    .group;
                let got = table.group(s, &[t, 0]);
                assert_eq!(got, want, "s={} t={}", s, t);
            }
        }
        let entry = |s: usize, t: i64| table.entries.get(&(s, vec![t, 0])).unwrap();
        assert_eq!(entry(1, 2).generators[0].1, "[s]");
        assert_eq!(entry(0, 4).generators[0].1, "a1^2");
        assert_eq!(entry(1, 6).generators[0].1, "a1^2*[s]");
        // Independent assembly of the zeroth line.
        for t in 0..=12i64 {
            let (desc, _) = h
                .primitives(&h.trivial_comodule(), &MultiDegree(vec![t, 0]))
                .unwrap();
            assert_eq!(desc, table.group(0, &[t, 0]), "primitives at t={}", t);
        }
    }

    #[test]
    fn cover_reduction_step1_matches_reduced_presentation() {
        let h = validated(
            weier_tilde_p2()
                .unwrap()
                .base_change_comodule(&h_w_inf_algebra())
                .unwrap(),
        );
        let report = h
            .change_of_cover(&CoverSpec {
                kill: "y".to_string(),
                witness: Witness::Tower("s".to_string()),
                check_to: 12,
            })
            .unwrap();
        assert!(report.validation.is_ok(), "{:?}", report.validation.failures);
        assert!(report.eliminated.contains(&"a6".to_string()));
        assert!(report.eliminated.contains(&"t".to_string()));
        assert!(report
            .presentation
            .same_presentation(&weier_prime_p2().unwrap()));
    }

    #[test]
    fn cover_reduction_step2_matches_reduced_presentation() {
        let report = validated(weier_prime_p2().unwrap())
            .change_of_cover(&CoverSpec {
                kill: "x".to_string(),
                witness: Witness::List(vec!["1".to_string(), "s".to_string()]),
                check_to: 16,
            })
            .unwrap();
        assert!(report.validation.is_ok(), "{:?}", report.validation.failures);
        assert!(report
            .presentation
            .same_presentation(&weier_doubleprime_p2().unwrap()));
    }

    #[test]
    fn odd_cover_reduction_collapses_the_cover() {
        let report = validated(weier_odd().unwrap())
            .change_of_cover(&CoverSpec {
                kill: "x".to_string(),
                witness: Witness::List(vec!["1".to_string()]),
                check_to: 12,
            })
            .unwrap();
        assert!(report.validation.is_ok());
        let h = &report.presentation;
        assert!(h.gamma.is_empty());
        assert_eq!(
            h.base.generators.iter().map(|g| g.name.as_str()).collect::<Vec<_>>(),
            vec!["b2", "b4", "y"]
        );
        let table = h
            .cobar_ext(
                &h.trivial_comodule(),
                &ExtWindow { s_max: 2, deg_max: MultiDegree(vec![16, 0]) },
            )
            .unwrap();
        let free_model = RingPresentation::new(
            h.base.coefficients.clone(),
            vec![gen2("b2", 4, 0), gen2("b4", 8, 0), gen2("y", 6, 0)],
            Vec::new(),
        )
        .unwrap();
        for t in 0..=16i64 {
            let want = free_model
                .graded_piece(&MultiDegree(vec![t, 0]))
                .unwrap()
                .group;
            assert_eq!(table.group(0, &[t, 0]), want, "t={}", t);
            assert!(table.group(1, &[t, 0]).is_zero());
            assert!(table.group(2, &[t, 0]).is_zero());
        }
    }

    #[test]
    fn witness_family_must_balance_ranks() {
        let res = validated(weier_odd().unwrap()).change_of_cover(&CoverSpec {
            kill: "x".to_string(),
            witness: Witness::Tower("r".to_string()),
            check_to: 8,
        });
        match res {
            Err(HopfError::WitnessFails { degree }) => assert_eq!(degree, vec![4, 0]),
            Err(other) => panic!("expected witness failure, got {}", other),
            Ok(_) => panic!("witness family should not balance"),
        }
    }

    /// Cohomology windows agree before and after each cover reduction.
    #[test]
    fn ext_agrees_across_cover_reductions() {
        let window = ExtWindow { s_max: 2, deg_max: MultiDegree(vec![10, 0]) };
        let big = validated(
            weier_tilde_p2()
                .unwrap()
                .base_change_comodule(&h_w_inf_algebra())
                .unwrap(),
        );
        let prime = validated(weier_prime_p2().unwrap());
        let dprime = validated(weier_doubleprime_p2().unwrap());
        let t_big = big.cobar_ext(&big.trivial_comodule(), &window).unwrap();
        let t_prime = prime.cobar_ext(&prime.trivial_comodule(), &window).unwrap();
        let t_dprime = dprime.cobar_ext(&dprime.trivial_comodule(), &window).unwrap();
        for s in 0..=2usize {
            for t in 0..=10i64 {
                assert_eq!(
                    t_big.group(s, &[t, 0]),
                    t_prime.group(s, &[t, 0]),
                    "first reduction at s={} t={}",
                    s,
                    t
                );
                assert_eq!(
                    t_prime.group(s, &[t, 0]),
                    t_dprime.group(s, &[t, 0]),
                    "second reduction at s={} t={}",
                    s,
                    t
                );
            }
        }
    }

    #[test]
    fn mod_invariant_quotient_matches_exterior_presentation() {
        let h = validated(weier_doubleprime_p2().unwrap());
        let q = h.mod_invariant_ideal(&["2", "a1"]).unwrap();
        assert!(q.validate().unwrap().is_ok());
        assert!(q.same_presentation(&b1().unwrap()));
    }

    #[test]
    fn ideal_invariance_is_checked() {
        let h = validated(weier_doubleprime_p2().unwrap());
        assert!(h.invariant_ideal_check(&["2", "a1"]).unwrap().is_ok());
        let w = validated(
            weier_tilde_p2()
                .unwrap()
                .base_change_comodule(&h_w_inf_algebra())
                .unwrap(),
        );
        assert!(!w.invariant_ideal_check(&["y"]).unwrap().is_ok());
        match w.mod_invariant_ideal(&["y"]) {
            Err(HopfError::NotInvariant(name)) => assert_eq!(name, "y"),
            other => panic!("expected invariance failure, got {:?}", other.is_ok()),
        }
    }

    #[test]
    fn json_round_trip() {
        let h = weier_tilde_p2().unwrap();
        let j = h.to_json();
        let h2 = HopfPresentation::from_json(&j).unwrap();
        assert!(h.same_presentation(&h2));
        assert!(h2.validate().unwrap().is_ok());
    }

    /// In the weighted curve comodule the scaling generator is primitive.
    #[test]
    fn weighted_curve_scaling_class_is_primitive() {
        let h = validated(
            weierstrass_full()
                .unwrap()
                .base_change_comodule(&h_w_star_algebra())
                .unwrap(),
        );
        let (desc, gens) = h
            .primitives(&h.trivial_comodule(), &MultiDegree(vec![0, 1]))
            .unwrap();
        assert_eq!(desc, GroupDescriptor::free(1));
        assert_eq!(gens, vec!["a"]);
    }
}
