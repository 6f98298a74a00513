//! Replay of multigraded spectral sequences from explicit differential rules.
//!
//! A run starts from a graded ring presentation (the first page), applies
//! named differentials page by page, and turns pages by exact integral
//! homology. Differentials are inputs, not deductions: each rule gives the
//! value of d_r on a generator or on a labeled monomial class, and the
//! engine extends by the Leibniz rule, verifies consistency (d respects the
//! ring relations, d two applications vanish, ranks never grow), and records
//! every page on a finite degree window.
//!
//! Cycle and boundary lattices are tracked per degree in the monomial basis,
//! so page groups come out as exact subquotients with generators, including
//! integral torsion. A run can hand off to a re-presentation of a later page
//! (the new ring is verified against the computed groups degree by degree),
//! which is how rules on classes like x^2*alpha that only exist after a
//! renaming are expressed.

use std::collections::BTreeMap;

use num::{BigInt, BigRational, One, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coeffs::Coefficients;
use crate::graded::{Generator, GradedError, MultiDegree, Poly, RingPresentation};
use crate::linalg::{
    column_span_basis, kernel_basis, rank, subquotient, Echelon, GroupDescriptor, LinalgError,
    Mat,
};

#[derive(Debug, Error)]
pub enum SseqError {
    #[error(transparent)]
    Graded(#[from] GradedError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("bad run input: {0}")]
    BadSpec(String),
    #[error("rule `{rule}` does not realize the page-{page} degree shift")]
    InconsistentRule { rule: String, page: i64 },
    #[error("page-{page} differential breaks the ring relations at degree {degree:?}")]
    RuleBreaksRelations { page: i64, degree: Vec<i64> },
    #[error("d∘d is nonzero modulo relations at page {page}, degree {degree:?}")]
    SquareNonzero { page: i64, degree: Vec<i64> },
    #[error("page-{page} group at degree {degree:?} is {computed} but the supplied presentation gives {presented}")]
    HandoffMismatch {
        page: i64,
        degree: Vec<i64>,
        computed: String,
        presented: String,
    },
    #[error("invariant `{name}` fails at {site}: {detail}")]
    InvariantViolated {
        name: &'static str,
        site: String,
        detail: String,
    },
    #[error("extension sides live in degrees {lhs:?} and {rhs:?}")]
    ExtensionDegreeMismatch { lhs: Vec<i64>, rhs: Vec<i64> },
    #[error("stable value {stable} disagrees with the filtered run ({unstable}) at degree {degree:?}")]
    CollapseMismatch {
        degree: Vec<i64>,
        stable: String,
        unstable: String,
    },
    #[error("window too large: {0}")]
    WindowTooLarge(String),
    #[error("bad report payload: {0}")]
    BadJson(String),
}

/// Degree shift family of the differentials. The internal dimension is
/// coordinate 0 and the filtration being resolved sits in a later slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DifferentialShape {
    /// Skeletal filtration of a cell structure: d_r moves (n, s) by (-1, +1)
    /// and drops the cell coordinate by r. With four gradings the cell
    /// coordinate is the last one and the third is untouched.
    Cell,
    /// Descent tower: d_r moves (n, s) by (-1, +r).
    Descent,
    /// Torsion bookkeeping: d_r moves (n, s) by (-1, +1) and raises the
    /// weight coordinate by r.
    Bockstein,
}

impl DifferentialShape {
    pub fn shift(&self, arity: usize, r: i64) -> MultiDegree {
        let mut v = vec![0i64; arity];
        v[0] = -1;
        match self {
            DifferentialShape::Cell => {
                v[1] = 1;
                if arity == 4 {
                    v[3] = -r;
                } else {
                    v[2] = -r;
                }
            }
            DifferentialShape::Descent => {
                v[1] = r;
            }
            DifferentialShape::Bockstein => {
                v[1] = 1;
                v[2] = r;
            }
        }
        MultiDegree(v)
    }

    fn arity_ok(&self, arity: usize) -> bool {
        match self {
            DifferentialShape::Cell => arity == 3 || arity == 4,
            DifferentialShape::Descent => (2..=4).contains(&arity),
            DifferentialShape::Bockstein => arity == 3,
        }
    }

    /// Whether d_r preserves the total line n + s, which makes per-line
    /// Euler characteristics page invariants.
    fn preserves_line(&self) -> bool {
        matches!(self, DifferentialShape::Cell | DifferentialShape::Bockstein)
    }
}

/// One differential, as read from a rule file. The source is a monomial in
/// the generators of the page the rule lives on; the target is any
/// homogeneous polynomial on that page. The citation string is carried into
/// the run notes verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub page: i64,
    pub source: String,
    pub target: String,
    #[serde(default)]
    pub citation: String,
}

/// A first page together with the shift family and its page number.
pub struct PageSpec {
    pub ring: RingPresentation,
    pub shape: DifferentialShape,
    pub start: i64,
}

/// One segment of a staged run: from `from_page` on, the groups are carried
/// by `ring` (verified against the previous segment on handoff) and the
/// listed rules fire on their pages.
pub struct Stage {
    pub from_page: i64,
    pub ring: RingPresentation,
    pub rules: Vec<Rule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeEntry {
    pub degree: Vec<i64>,
    pub group: GroupDescriptor,
    pub generators: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageTable {
    pub page: i64,
    pub entries: Vec<DegreeEntry>,
}

/// Multiplication towers over one distinguished degree-shifting generator,
/// collected per (n, s). `free_z` and `free_p` count towers that reach the
/// window edge (torsion-free and prime-torsion respectively); the truncated
/// lists give the lengths of towers that die inside the window.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TowerDescriptor {
    pub free_z: usize,
    pub free_p: usize,
    pub truncated_z: Vec<u32>,
    pub truncated_p: Vec<u32>,
}

impl TowerDescriptor {
    pub fn is_empty(&self) -> bool {
        self.free_z == 0
            && self.free_p == 0
            && self.truncated_z.is_empty()
            && self.truncated_p.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TowerEntry {
    pub degree: Vec<i64>,
    pub tower: TowerDescriptor,
}

/// Serializable outcome of a run: every page's nonzero groups on the report
/// window, tower data on the final page, registered extensions, and notes
/// (applied rules with citations, vanishing targets, verified handoffs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub arity: usize,
    pub shape: DifferentialShape,
    pub start_page: i64,
    pub final_page: i64,
    pub window: MultiDegree,
    pub ring_json: String,
    pub pages: Vec<PageTable>,
    pub towers: Vec<TowerEntry>,
    pub extensions: Vec<String>,
    pub notes: Vec<String>,
}

impl RunReport {
    pub fn entries(&self, page: i64) -> Option<&[DegreeEntry]> {
        self.pages
            .iter()
            .find(|t| t.page == page)
            .map(|t| t.entries.as_slice())
    }

    /// Group at one degree of one recorded page; absent entries are zero.
    pub fn group(&self, page: i64, degree: &[i64]) -> GroupDescriptor {
        self.entries(page)
            .and_then(|es| es.iter().find(|e| e.degree == degree))
            .map(|e| e.group.clone())
            .unwrap_or_default()
    }

    pub fn final_groups(&self) -> &[DegreeEntry] {
        self.entries(self.final_page).unwrap_or(&[])
    }

    pub fn tower(&self, degree: &[i64]) -> Option<&TowerDescriptor> {
        self.towers
            .iter()
            .find(|t| t.degree == degree)
            .map(|t| &t.tower)
    }

    /// The presentation carrying the final page's labels.
    pub fn final_ring(&self) -> Result<RingPresentation, SseqError> {
        let v: serde_json::Value = serde_json::from_str(&self.ring_json)
            .map_err(|e| SseqError::BadJson(e.to_string()))?;
        Ok(RingPresentation::from_json(&v)?)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json_str(s: &str) -> Result<RunReport, SseqError> {
        serde_json::from_str(s).map_err(|e| SseqError::BadJson(e.to_string()))
    }
}

/// Row of a degreewise comparison between a run and a target presentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffRow {
    pub degree: Vec<i64>,
    pub run: GroupDescriptor,
    pub target: GroupDescriptor,
}

// Per-degree lattice bookkeeping. `rels` spans the presentation ideal in
// the monomial basis and never changes within a stage; `z` and `b` are the
// current cycle and boundary lattices (boundaries excluding the ideal).
struct DegreeState {
    monos: Vec<Vec<u32>>,
    idx: BTreeMap<Vec<u32>, usize>,
    rels: Mat,
    z: Mat,
    b: Mat,
}

impl DegreeState {
    fn boundary_mat(&self) -> Mat {
        Mat::hstack(&[&self.rels, &self.b])
    }
}

/// Full lattice state of a finished run, kept for tower counting and
/// reassembly; the serializable summary lives in [`RunReport`].
pub struct RunState {
    ring: RingPresentation,
    shape: DifferentialShape,
    page: i64,
    hi: Vec<i64>,
    degrees: BTreeMap<Vec<i64>, DegreeState>,
}

impl RunState {
    pub fn page(&self) -> i64 {
        self.page
    }

    pub fn ring(&self) -> &RingPresentation {
        &self.ring
    }

    /// Exact group at one degree of the current page (zero if the degree is
    /// outside the computed box or has no monomials).
    pub fn group(&self, degree: &[i64]) -> Result<GroupDescriptor, SseqError> {
        match self.degrees.get(degree) {
            None => Ok(GroupDescriptor::zero()),
            Some(st) => Ok(subquotient(
                &st.z,
                &st.boundary_mat(),
                &self.ring.coefficients,
            )?
            .descriptor),
        }
    }
}

const MONO_CAP: usize = 400_000;

fn within(d: &[i64], hi: &[i64]) -> bool {
    d.iter().zip(hi).all(|(x, h)| *x >= 0 && x <= h)
}

// Upper corner of the internal box: the report window padded, coordinate by
// coordinate, with the total shift the differentials can accumulate over
// the run, so that every interaction reaching a reported degree is inside.
fn internal_box(
    shape: &DifferentialShape,
    arity: usize,
    window: &MultiDegree,
    start: i64,
    max_page: i64,
) -> Vec<i64> {
    let mut hi = window.0.clone();
    for r in start..=max_page {
        let s = shape.shift(arity, r);
        for (c, v) in s.0.iter().enumerate() {
            hi[c] += v.abs();
        }
    }
    // The cell coordinate of a monomial bounds its stabilization coordinate,
    // so the last slot never needs to exceed the third.
    if arity == 4 && *shape == DifferentialShape::Cell {
        hi[3] = hi[3].min(hi[2]);
    }
    hi
}

// All monomials of the ring with degree inside the box, grouped by degree.
fn enumerate_box(
    ring: &RingPresentation,
    hi: &[i64],
) -> Result<BTreeMap<Vec<i64>, Vec<Vec<u32>>>, SseqError> {
    for g in &ring.generators {
        if g.inverted {
            return Err(SseqError::BadSpec(format!(
                "generator {} is inverted; pages must be plain presentations",
                g.name
            )));
        }
        if g.degree.0.iter().any(|&x| x < 0) || g.degree.0.iter().all(|&x| x == 0) {
            return Err(SseqError::BadSpec(format!(
                "generator {} needs a nonzero componentwise-nonnegative degree",
                g.name
            )));
        }
    }
    let n = ring.nvars();
    let mut out: BTreeMap<Vec<i64>, Vec<Vec<u32>>> = BTreeMap::new();
    let mut expos = vec![0u32; n];
    let mut deg = vec![0i64; n.max(1)];
    deg.truncate(hi.len());
    deg.resize(hi.len(), 0);
    let mut count = 0usize;
    fn rec(
        ring: &RingPresentation,
        hi: &[i64],
        i: usize,
        expos: &mut Vec<u32>,
        deg: &mut Vec<i64>,
        out: &mut BTreeMap<Vec<i64>, Vec<Vec<u32>>>,
        count: &mut usize,
    ) -> Result<(), SseqError> {
        if i == ring.nvars() {
            *count += 1;
            if *count > MONO_CAP {
                return Err(SseqError::WindowTooLarge(format!(
                    "more than {} monomials in the padded window",
                    MONO_CAP
                )));
            }
            out.entry(deg.clone()).or_default().push(expos.clone());
            return Ok(());
        }
        let gdeg = &ring.generators[i].degree.0;
        let mut e = 0u32;
        loop {
            let fits = deg
                .iter()
                .zip(gdeg)
                .zip(hi)
                .all(|((d, g), h)| d + i64::from(e) * g <= *h);
            if !fits {
                break;
            }
            expos[i] = e;
            let saved = deg.clone();
            for (c, g) in gdeg.iter().enumerate() {
                deg[c] += i64::from(e) * g;
            }
            rec(ring, hi, i + 1, expos, deg, out, count)?;
            *deg = saved;
            e += 1;
        }
        expos[i] = 0;
        Ok(())
    }
    rec(ring, hi, 0, &mut expos, &mut deg, &mut out, &mut count)?;
    for monos in out.values_mut() {
        monos.sort();
    }
    Ok(out)
}

fn build_states(
    ring: &RingPresentation,
    hi: &[i64],
) -> Result<BTreeMap<Vec<i64>, DegreeState>, SseqError> {
    let grouped = enumerate_box(ring, hi)?;
    let keys: Vec<Vec<i64>> = grouped.keys().cloned().collect();
    let states: Result<Vec<(Vec<i64>, DegreeState)>, SseqError> = keys
        .par_iter()
        .map(|d| {
            let monos = grouped[d].clone();
            let cols = ring.ideal_columns(&MultiDegree(d.clone()), &monos)?;
            let rels = Mat::from_cols(monos.len(), &cols);
            let idx = monos
                .iter()
                .enumerate()
                .map(|(i, m)| (m.clone(), i))
                .collect();
            let z = Mat::identity(monos.len());
            let b = Mat::zero(monos.len(), 0);
            Ok((
                d.clone(),
                DegreeState {
                    monos,
                    idx,
                    rels,
                    z,
                    b,
                },
            ))
        })
        .collect();
    Ok(states?.into_iter().collect())
}

struct CompiledRule {
    pattern: Vec<u32>,
    var: Option<usize>,
    target: Poly,
    label: String,
}

fn compile_rules(
    ring: &RingPresentation,
    shape: &DifferentialShape,
    page: i64,
    rules: &[&Rule],
) -> Result<Vec<CompiledRule>, SseqError> {
    let shift = shape.shift(ring.arity(), page);
    let mut out = Vec::new();
    for rule in rules {
        let label = format!("d{}({}) = {}", page, rule.source, rule.target);
        let src = ring.parse(&rule.source)?;
        if src.terms.len() != 1 {
            return Err(SseqError::BadSpec(format!(
                "rule source `{}` must be a single monomial",
                rule.source
            )));
        }
        let (pattern, coef) = src.terms.iter().next().unwrap();
        if !coef.is_one() {
            return Err(SseqError::BadSpec(format!(
                "rule source `{}` must have coefficient one",
                rule.source
            )));
        }
        let pattern = pattern.clone();
        if pattern.iter().all(|&e| e == 0) {
            return Err(SseqError::BadSpec(format!(
                "rule source `{}` is a constant",
                rule.source
            )));
        }
        let var = if pattern.iter().map(|&e| u64::from(e)).sum::<u64>() == 1 {
            pattern.iter().position(|&e| e == 1)
        } else {
            None
        };
        let target = ring.parse(&rule.target)?;
        if !target.is_zero() {
            let sdeg = ring
                .monomial_degree(&pattern)
                .add(&shift);
            match ring.degree_of(&target)? {
                Some(t) if t == sdeg => {}
                _ => {
                    return Err(SseqError::InconsistentRule {
                        rule: label,
                        page,
                    });
                }
            }
        }
        out.push(CompiledRule {
            pattern,
            var,
            target,
            label,
        });
    }
    Ok(out)
}

// Leibniz extension of the page's rules to one monomial. Generator rules
// get the multiplicity of the power rule (reduced mod 2 for generators of
// odd internal dimension) and the Koszul sign of the factors passed over;
// composite-source rules extract the largest power of the source class and
// apply the same power rule to it.
fn differential_of_mono(
    ring: &RingPresentation,
    rules: &[CompiledRule],
    e: &[u32],
) -> Poly {
    let mut total = Poly::zero();
    for rule in rules {
        match rule.var {
            Some(i) => {
                let ei = e[i];
                if ei == 0 {
                    continue;
                }
                let odd = ring.generators[i].degree.0[0].rem_euclid(2) == 1;
                let mult: i64 = if odd { i64::from(ei % 2) } else { i64::from(ei) };
                if mult == 0 {
                    continue;
                }
                let mut prefix = 0i64;
                for (j, &ej) in e.iter().enumerate().take(i) {
                    prefix += i64::from(ej) * ring.generators[j].degree.0[0];
                }
                let sign = if prefix.rem_euclid(2) == 1 { -1 } else { 1 };
                let mut rest = e.to_vec();
                rest[i] -= 1;
                let c = BigRational::from(BigInt::from(mult * sign));
                total = total.add(&rule.target.mul_monomial(&rest).scale(&c));
            }
            None => {
                // Composite-source rule: treat the source monomial as a
                // single class P and extend by the power rule, d(P^k R) =
                // k P^{k-1} d(P) R, with k reduced mod 2 when P has odd
                // total dimension (P^2 is then a relation).
                let k = rule
                    .pattern
                    .iter()
                    .zip(e)
                    .filter(|(p, _)| **p > 0)
                    .map(|(p, x)| x / p)
                    .min()
                    .unwrap_or(0);
                if k == 0 {
                    continue;
                }
                let pat_dim: i64 = rule
                    .pattern
                    .iter()
                    .enumerate()
                    .map(|(i, &p)| i64::from(p) * ring.generators[i].degree.0[0])
                    .sum();
                let mult: i64 = if pat_dim.rem_euclid(2) == 1 {
                    i64::from(k % 2)
                } else {
                    i64::from(k)
                };
                if mult == 0 {
                    continue;
                }
                let rest: Vec<u32> =
                    e.iter().zip(&rule.pattern).map(|(x, p)| x - p).collect();
                let c = BigRational::from(BigInt::from(mult));
                total = total.add(&rule.target.mul_monomial(&rest).scale(&c));
            }
        }
    }
    total
}

fn poly_to_column(p: &Poly, idx: &BTreeMap<Vec<u32>, usize>, len: usize) -> Option<Vec<BigRational>> {
    let mut col = vec![BigRational::zero(); len];
    for (e, c) in &p.terms {
        match idx.get(e) {
            Some(&row) => col[row] = c.clone(),
            None => return None,
        }
    }
    Some(col)
}

// One page turn: build d_r from the rules, check it descends to the page's
// subquotients (relations and old boundaries map into relations plus
// boundaries, and d squared vanishes modulo the same span), then replace
// every degree's cycle and boundary lattices.
fn apply_page(
    state: &mut RunState,
    page: i64,
    rules: &[CompiledRule],
    notes: &mut Vec<String>,
) -> Result<(), SseqError> {
    let dom = state.ring.coefficients.clone();
    let arity = state.ring.arity();
    let shift = state.shape.shift(arity, page);
    let hi = state.hi.clone();

    // Differential matrices per source degree.
    let keys: Vec<Vec<i64>> = state.degrees.keys().cloned().collect();
    let diffs: Result<Vec<(Vec<i64>, Option<Mat>)>, SseqError> = keys
        .par_iter()
        .map(|d| {
            let st = &state.degrees[d];
            let td: Vec<i64> = d.iter().zip(&shift.0).map(|(x, s)| x + s).collect();
            if !within(&td, &hi) {
                // Interactions that leave the padded box cannot reach the
                // report window; treat the differential as zero out here.
                return Ok((d.clone(), None));
            }
            let target = state.degrees.get(&td);
            let mut cols = Vec::with_capacity(st.monos.len());
            let mut nonzero = false;
            for e in &st.monos {
                let p = differential_of_mono(&state.ring, rules, e);
                if p.is_zero() {
                    cols.push(Vec::new());
                    continue;
                }
                let t = target.ok_or_else(|| SseqError::InvariantViolated {
                    name: "homogeneity",
                    site: format!("degree {:?}", d),
                    detail: "nonzero differential lands in an empty degree".into(),
                })?;
                let col = poly_to_column(&p, &t.idx, t.monos.len()).ok_or_else(|| {
                    SseqError::InvariantViolated {
                        name: "homogeneity",
                        site: format!("degree {:?}", d),
                        detail: "differential image misses the monomial basis".into(),
                    }
                })?;
                nonzero = true;
                cols.push(col);
            }
            if !nonzero {
                return Ok((d.clone(), None));
            }
            let rows = target.map(|t| t.monos.len()).unwrap_or(0);
            let mut m = Mat::zero(rows, st.monos.len());
            for (j, col) in cols.iter().enumerate() {
                for (i, v) in col.iter().enumerate() {
                    if !v.is_zero() {
                        m.set(i, j, v.clone());
                    }
                }
            }
            Ok((d.clone(), Some(m)))
        })
        .collect();
    let diffs: BTreeMap<Vec<i64>, Option<Mat>> = diffs?.into_iter().collect();

    // Echelons of the relation-plus-boundary span at target degrees. The
    // differential must be well-defined on the page's subquotient, so image
    // membership is always tested modulo that span, not the ideal alone.
    let bi_ech: BTreeMap<Vec<i64>, Echelon> = {
        let needed: Vec<Vec<i64>> = keys
            .iter()
            .filter(|d| diffs.get(*d).map(|m| m.is_some()).unwrap_or(false))
            .flat_map(|d| {
                let td: Vec<i64> = d.iter().zip(&shift.0).map(|(x, s)| x + s).collect();
                let tdd: Vec<i64> = td.iter().zip(&shift.0).map(|(x, s)| x + s).collect();
                [td, tdd]
            })
            .collect();
        let mut uniq: Vec<Vec<i64>> = needed;
        uniq.sort();
        uniq.dedup();
        uniq.into_par_iter()
            .filter_map(|td| {
                state
                    .degrees
                    .get(&td)
                    .map(|t| (td.clone(), column_span_basis(&t.boundary_mat(), &dom)))
            })
            .collect::<Vec<_>>()
            .into_iter()
            .collect()
    };

    // d must send relations and old boundaries into the target's span of
    // relations and boundaries (so it induces a map of subquotients), and
    // d∘d must vanish modulo that span.
    for d in &keys {
        let Some(Some(m)) = diffs.get(d) else { continue };
        let st = &state.degrees[d];
        let td: Vec<i64> = d.iter().zip(&shift.0).map(|(x, s)| x + s).collect();
        let dead = st.boundary_mat();
        if dead.cols > 0 && m.rows > 0 {
            let ech = bi_ech.get(&td).ok_or_else(|| SseqError::RuleBreaksRelations {
                page,
                degree: d.clone(),
            })?;
            let img = m.mul(&dead);
            for j in 0..img.cols {
                if !ech.contains(&img.col(j), &dom) {
                    return Err(SseqError::RuleBreaksRelations {
                        page,
                        degree: d.clone(),
                    });
                }
            }
        }
        if let Some(Some(m2)) = diffs.get(&td) {
            let comp = m2.mul(m);
            if !comp.is_zero() {
                let tdd: Vec<i64> = td.iter().zip(&shift.0).map(|(x, s)| x + s).collect();
                let ech = bi_ech.get(&tdd);
                for j in 0..comp.cols {
                    let col = comp.col(j);
                    if col.iter().all(|x| x.is_zero()) {
                        continue;
                    }
                    let ok = ech.map(|e| e.contains(&col, &dom)).unwrap_or(false);
                    if !ok {
                        return Err(SseqError::SquareNonzero {
                            page,
                            degree: d.clone(),
                        });
                    }
                }
            }
        }
    }

    // Leibniz consistency on products of generators: the monomial value of
    // d on g_i * g_j must agree with the two-factor expansion modulo
    // relations and boundaries. Composite-source rules that overlap such a
    // product would surface here.
    for i in 0..state.ring.nvars() {
        for j in i..state.ring.nvars() {
            let gi = &state.ring.generators[i];
            let gj = &state.ring.generators[j];
            let pd = gi.degree.add(&gj.degree);
            if !within(&pd.0, &hi) {
                continue;
            }
            let mut e = vec![0u32; state.ring.nvars()];
            e[i] += 1;
            e[j] += 1;
            let lhs = differential_of_mono(&state.ring, rules, &e);
            let mut ei = vec![0u32; state.ring.nvars()];
            ei[i] = 1;
            let mut ej = vec![0u32; state.ring.nvars()];
            ej[j] = 1;
            let di = differential_of_mono(&state.ring, rules, &ei);
            let dj = differential_of_mono(&state.ring, rules, &ej);
            let sign = if gi.degree.0[0].rem_euclid(2) == 1 {
                -BigRational::one()
            } else {
                BigRational::one()
            };
            let rhs = di.mul_monomial(&ej).add(&dj.mul_monomial(&ei).scale(&sign));
            let diff = lhs.sub(&rhs);
            if diff.is_zero() {
                continue;
            }
            let td: Vec<i64> = pd.0.iter().zip(&shift.0).map(|(x, s)| x + s).collect();
            let ok = match state.degrees.get(&td) {
                None => false,
                Some(t) => {
                    let col = poly_to_column(&diff, &t.idx, t.monos.len());
                    match col {
                        None => false,
                        Some(col) => {
                            column_span_basis(&t.boundary_mat(), &dom).contains(&col, &dom)
                        }
                    }
                }
            };
            if !ok {
                return Err(SseqError::InvariantViolated {
                    name: "leibniz",
                    site: format!("generators {} and {}", gi.name, gj.name),
                    detail: format!("page {} differential is not a derivation there", page),
                });
            }
        }
    }

    // Rules whose target class is already zero on this page are reported
    // and contribute nothing (their matrix entries land inside the
    // boundary lattice, so no cycle is lost to them).
    for rule in rules {
        if rule.target.is_zero() {
            continue;
        }
        let tdeg = state
            .ring
            .degree_of(&rule.target)
            .ok()
            .flatten()
            .map(|d| d.0);
        let Some(tdeg) = tdeg else { continue };
        if !within(&tdeg, &hi) {
            continue;
        }
        match state.degrees.get(&tdeg) {
            None => notes.push(format!(
                "page {}: target of `{}` is not on the page; treated as zero",
                page, rule.label
            )),
            Some(t) => {
                if let Some(col) = poly_to_column(&rule.target, &t.idx, t.monos.len()) {
                    let bmat = t.boundary_mat();
                    if bmat.cols > 0
                        && column_span_basis(&bmat, &dom).contains(&col, &dom)
                    {
                        notes.push(format!(
                            "page {}: target of `{}` already vanishes on the page; treated as zero",
                            page, rule.label
                        ));
                    }
                } else {
                    notes.push(format!(
                        "page {}: target of `{}` is not on the page; treated as zero",
                        page, rule.label
                    ));
                }
            }
        }
    }

    // Turn the page: new cycles are the part of Z mapping into the target's
    // boundary lattice, new boundaries append the image of the source's Z.
    let turned: Vec<(Vec<i64>, Mat, Mat)> = keys
        .par_iter()
        .map(|d| {
            let st = &state.degrees[d];
            let td: Vec<i64> = d.iter().zip(&shift.0).map(|(x, s)| x + s).collect();
            let sd: Vec<i64> = d.iter().zip(&shift.0).map(|(x, s)| x - s).collect();

            let new_z = match diffs.get(d) {
                Some(Some(m)) => {
                    let dz = m.mul(&st.z);
                    let tgt_b = state
                        .degrees
                        .get(&td)
                        .map(|t| t.boundary_mat())
                        .unwrap_or_else(|| Mat::zero(m.rows, 0));
                    let stacked = Mat::hstack(&[&dz, &tgt_b]);
                    let ker = kernel_basis(&stacked, &dom);
                    // x-parts of the kernel live in the first z.cols rows.
                    let mut xcols = Vec::new();
                    for j in 0..ker.cols {
                        let col = ker.col(j);
                        xcols.push(col[..st.z.cols].to_vec());
                    }
                    let x = Mat::from_cols(st.z.cols, &xcols);
                    column_span_basis(&st.z.mul(&x), &dom).mat
                }
                _ => st.z.clone(),
            };

            let mut bcols: Vec<Vec<BigRational>> = Vec::new();
            for j in 0..st.b.cols {
                bcols.push(st.b.col(j));
            }
            if within(&sd, &hi) {
                if let (Some(Some(ms)), Some(src)) = (diffs.get(&sd), state.degrees.get(&sd)) {
                    let img = ms.mul(&src.z);
                    for j in 0..img.cols {
                        bcols.push(img.col(j));
                    }
                }
            }
            let new_b = column_span_basis(&Mat::from_cols(st.monos.len(), &bcols), &dom).mat;
            (d.clone(), new_z, new_b)
        })
        .collect();

    for (d, z, b) in turned {
        let st = state.degrees.get_mut(&d).unwrap();
        st.z = z;
        st.b = b;
    }
    Ok(())
}

fn record_page(
    state: &RunState,
    page: i64,
    window: &[i64],
) -> Result<PageTable, SseqError> {
    let keys: Vec<Vec<i64>> = state
        .degrees
        .keys()
        .filter(|d| within(d, window))
        .cloned()
        .collect();
    let entries: Result<Vec<Option<DegreeEntry>>, SseqError> = keys
        .par_iter()
        .map(|d| {
            let st = &state.degrees[d];
            let sq = subquotient(&st.z, &st.boundary_mat(), &state.ring.coefficients)?;
            if sq.descriptor.is_zero() {
                return Ok(None);
            }
            let generators = sq
                .gens
                .iter()
                .map(|(order, v)| {
                    let label = state.ring.format_linear(&st.monos, v);
                    if order.is_zero() {
                        label
                    } else {
                        format!("{} (order {})", label, order)
                    }
                })
                .collect();
            Ok(Some(DegreeEntry {
                degree: d.clone(),
                group: sq.descriptor,
                generators,
            }))
        })
        .collect();
    Ok(PageTable {
        page,
        entries: entries?.into_iter().flatten().collect(),
    })
}

fn check_rank_monotone(prev: &PageTable, next: &PageTable) -> Result<(), SseqError> {
    let prev_map: BTreeMap<&Vec<i64>, &GroupDescriptor> =
        prev.entries.iter().map(|e| (&e.degree, &e.group)).collect();
    for e in &next.entries {
        let (pf, pt) = prev_map
            .get(&e.degree)
            .map(|g| (g.free, g.torsion.len()))
            .unwrap_or((0, 0));
        let grew_free = e.group.free > pf;
        let grew_total = e.group.free + e.group.torsion.len() > pf + pt;
        if grew_free || grew_total {
            return Err(SseqError::InvariantViolated {
                name: "rank-monotonicity",
                site: format!("degree {:?}, page {} to {}", e.degree, prev.page, next.page),
                detail: format!(
                    "{} grew to {}",
                    prev_map
                        .get(&e.degree)
                        .map(|g| g.to_string())
                        .unwrap_or_else(|| "0".into()),
                    e.group
                ),
            });
        }
    }
    Ok(())
}

// Euler characteristic per fixed line, for shift families preserving n + s.
// A line is checked only when every nonzero degree it meets stays inside
// the report window under the page's shift, forward and backward.
fn euler_lines(
    state: &RunState,
    shift: &MultiDegree,
    window: &[i64],
    table: &PageTable,
) -> Result<BTreeMap<Vec<i64>, i64>, SseqError> {
    let ring = &state.ring;
    // Emptiness of a degree: read off the enumerated box; fall back to a
    // fresh enumeration only for neighbors outside it.
    let nonempty = |d: &[i64]| -> Result<bool, SseqError> {
        if within(d, &state.hi) {
            Ok(state.degrees.contains_key(d))
        } else {
            Ok(!ring.monomials_of_degree(&MultiDegree(d.to_vec()))?.is_empty())
        }
    };
    // Line key: n + s followed by the untouched coordinates.
    let fixed: Vec<usize> = (2..shift.0.len()).filter(|&c| shift.0[c] == 0).collect();
    let mut degrees: Vec<Vec<i64>> = Vec::new();
    {
        // Walk the whole window so emptiness of off-table degrees counts.
        let mut cur = vec![0i64; window.len()];
        loop {
            degrees.push(cur.clone());
            let mut c = window.len();
            loop {
                if c == 0 {
                    break;
                }
                c -= 1;
                if cur[c] < window[c] {
                    cur[c] += 1;
                    for x in cur.iter_mut().skip(c + 1) {
                        *x = 0;
                    }
                    break;
                }
                if c == 0 {
                    cur.clear();
                    break;
                }
            }
            if cur.is_empty() {
                break;
            }
        }
    }
    let group_free: BTreeMap<&Vec<i64>, usize> = table
        .entries
        .iter()
        .map(|e| (&e.degree, e.group.free))
        .collect();
    let mut sums: BTreeMap<Vec<i64>, i64> = BTreeMap::new();
    let mut open: BTreeMap<Vec<i64>, bool> = BTreeMap::new();
    for d in &degrees {
        let mut key = vec![d[0] + d[1]];
        key.extend(fixed.iter().map(|&c| d[c]));
        if nonempty(d)? {
            for dir in [1i64, -1] {
                let nb: Vec<i64> = d
                    .iter()
                    .zip(&shift.0)
                    .map(|(x, s)| x + dir * s)
                    .collect();
                if within(&nb, window) {
                    continue;
                }
                if nb.iter().any(|&x| x < 0) {
                    continue;
                }
                if nonempty(&nb)? {
                    open.insert(key.clone(), true);
                }
            }
        }
        let f = group_free.get(d).copied().unwrap_or(0) as i64;
        let sign = if d[1].rem_euclid(2) == 1 { -1 } else { 1 };
        *sums.entry(key).or_insert(0) += sign * f;
    }
    for (k, is_open) in open {
        if is_open {
            sums.remove(&k);
        }
    }
    Ok(sums)
}

fn validate_cell_filtration(ring: &RingPresentation) -> Result<(), SseqError> {
    if ring.arity() != 4 {
        return Ok(());
    }
    for g in &ring.generators {
        let m = g.degree.0[2];
        let u = g.degree.0[3];
        if u > m {
            return Err(SseqError::BadSpec(format!(
                "generator {} has birth coordinate {} above its cell coordinate {}",
                g.name, u, m
            )));
        }
        if u < m && !(g.degree.0[0] == 0 && g.degree.0[1] == 0) {
            return Err(SseqError::BadSpec(format!(
                "generator {} lowers the birth coordinate but is not a stabilization class",
                g.name
            )));
        }
    }
    Ok(())
}

// Verifies a stage's ring against the computed page-r groups, then swaps the
// run onto the new presentation. Near the top of the padded box the computed
// groups are unreliable in both directions: outgoing differentials whose
// targets fall past the edge are treated as zero (kernel overstated), and
// incoming differentials from sources past the edge are never applied
// (boundary understated). The comparison keeps only degrees every applied
// shift stays inside of, edge to edge.
fn stage_handoff(
    state: &mut RunState,
    stage: &Stage,
    r: i64,
    start: i64,
    notes: &mut Vec<String>,
) -> Result<(), SseqError> {
    let arity = state.hi.len();
    let new_states = build_states(&stage.ring, &state.hi)?;
    let mut maxabs = vec![0i64; arity];
    for r_prev in start..r {
        let sh = state.shape.shift(arity, r_prev);
        for (c, &s) in sh.0.iter().enumerate() {
            maxabs[c] = maxabs[c].max(s.abs());
        }
    }
    let exact_here = |d: &Vec<i64>| -> bool {
        d.iter()
            .zip(&maxabs)
            .zip(&state.hi)
            .all(|((x, p), h)| x + p <= *h)
    };
    let mut all_keys: Vec<Vec<i64>> = state.degrees.keys().cloned().collect();
    all_keys.extend(new_states.keys().cloned());
    all_keys.sort();
    all_keys.dedup();
    all_keys.retain(|d| exact_here(d));
    let checks: Result<Vec<()>, SseqError> = all_keys
        .par_iter()
        .map(|d| {
            let computed = match state.degrees.get(d) {
                None => GroupDescriptor::zero(),
                Some(st) => {
                    subquotient(&st.z, &st.boundary_mat(), &state.ring.coefficients)?
                        .descriptor
                }
            };
            let presented = stage
                .ring
                .graded_piece(&MultiDegree(d.clone()))?
                .group;
            if computed != presented {
                return Err(SseqError::HandoffMismatch {
                    page: r,
                    degree: d.clone(),
                    computed: computed.to_string(),
                    presented: presented.to_string(),
                });
            }
            Ok(())
        })
        .collect();
    checks?;
    notes.push(format!(
        "page {}: re-presentation verified on {} degrees",
        r,
        all_keys.len()
    ));
    state.ring = stage.ring.clone();
    state.degrees = new_states;
    Ok(())
}

/// Run a staged replay. Stage boundaries re-present the page they start on;
/// the engine verifies the new ring's graded pieces against the computed
/// groups on the whole padded box before switching to it.
pub fn run_staged(
    shape: DifferentialShape,
    stages: &[Stage],
    window: &MultiDegree,
    max_page: i64,
) -> Result<(RunReport, RunState), SseqError> {
    if stages.is_empty() {
        return Err(SseqError::BadSpec("no stages".into()));
    }
    let arity = stages[0].ring.arity();
    if !shape.arity_ok(arity) {
        return Err(SseqError::BadSpec(format!(
            "shift family does not support arity {}",
            arity
        )));
    }
    if window.arity() != arity {
        return Err(SseqError::BadSpec("window arity mismatch".into()));
    }
    if window.0.iter().any(|&x| x < 0) {
        return Err(SseqError::BadSpec("window must be nonnegative".into()));
    }
    for w in stages.windows(2) {
        if w[1].from_page <= w[0].from_page {
            return Err(SseqError::BadSpec(
                "stage start pages must strictly increase".into(),
            ));
        }
    }
    for (k, stage) in stages.iter().enumerate() {
        if stage.ring.arity() != arity {
            return Err(SseqError::BadSpec("stage arity mismatch".into()));
        }
        if stage.ring.coefficients != stages[0].ring.coefficients {
            return Err(SseqError::BadSpec(
                "stages must share a coefficient ring".into(),
            ));
        }
        if stage.from_page > max_page.max(stages[0].from_page) {
            return Err(SseqError::BadSpec(format!(
                "stage starting on page {} is beyond the last computed page",
                stage.from_page
            )));
        }
        if shape == DifferentialShape::Cell {
            validate_cell_filtration(&stage.ring)?;
        }
        let next_start = stages.get(k + 1).map(|s| s.from_page);
        for rule in &stage.rules {
            if rule.page < stage.from_page
                || next_start.map(|n| rule.page >= n).unwrap_or(false)
            {
                return Err(SseqError::BadSpec(format!(
                    "rule on page {} is outside its stage",
                    rule.page
                )));
            }
        }
    }

    let start = stages[0].from_page;
    let mut final_page = start;
    for stage in stages {
        final_page = final_page.max(stage.from_page);
        for rule in &stage.rules {
            if rule.page < max_page {
                final_page = final_page.max(rule.page + 1);
            } else {
                final_page = final_page.max(max_page);
            }
        }
    }
    let final_page = final_page.min(max_page.max(start));

    let hi = internal_box(&shape, arity, window, start, max_page);
    let mut notes: Vec<String> = Vec::new();
    let mut state = RunState {
        ring: stages[0].ring.clone(),
        shape,
        page: start,
        hi: hi.clone(),
        degrees: build_states(&stages[0].ring, &hi)?,
    };

    let mut pages: Vec<PageTable> = vec![record_page(&state, start, &window.0)?];

    for r in start..final_page {
        // Handoff to a re-presentation that starts at this page.
        if let Some(stage) = stages.iter().find(|s| s.from_page == r && s.from_page != start) {
            stage_handoff(&mut state, stage, r, start, &mut notes)?;
        }

        let active = stages
            .iter()
            .rev()
            .find(|s| s.from_page <= r)
            .expect("a stage covers every page");
        let page_rules: Vec<&Rule> = active.rules.iter().filter(|x| x.page == r).collect();
        if !page_rules.is_empty() {
            let compiled = compile_rules(&state.ring, &shape, r, &page_rules)?;
            for (rule, c) in page_rules.iter().zip(&compiled) {
                if rule.citation.is_empty() {
                    notes.push(format!("page {}: applied {}", r, c.label));
                } else {
                    notes.push(format!("page {}: applied {} [{}]", r, c.label, rule.citation));
                }
            }
            let before = pages.last().unwrap().clone();
            let shift_r = shape.shift(arity, r);
            let euler_before = if shape.preserves_line() {
                Some(euler_lines(&state, &shift_r, &window.0, &before)?)
            } else {
                None
            };
            apply_page(&mut state, r, &compiled, &mut notes)?;
            state.page = r + 1;
            let table = record_page(&state, r + 1, &window.0)?;
            check_rank_monotone(&before, &table)?;
            if let Some(eb) = euler_before {
                let ea = euler_lines(&state, &shift_r, &window.0, &table)?;
                for (line, sum) in &eb {
                    if let Some(after) = ea.get(line) {
                        if after != sum {
                            return Err(SseqError::InvariantViolated {
                                name: "euler-characteristic",
                                site: format!("line {:?}, page {}", line, r),
                                detail: format!("{} became {}", sum, after),
                            });
                        }
                    }
                }
            }
            pages.push(table);
        } else {
            state.page = r + 1;
            let mut table = pages.last().unwrap().clone();
            table.page = r + 1;
            pages.push(table);
        }
    }

    // A claim-only stage starting on the final page is still verified; its
    // presentation replaces the recorded final table.
    if let Some(stage) = stages
        .iter()
        .find(|s| s.from_page == final_page && s.from_page != start)
    {
        stage_handoff(&mut state, stage, final_page, start, &mut notes)?;
        let t = record_page(&state, final_page, &window.0)?;
        *pages.last_mut().unwrap() = t;
    }

    let towers = match tower_generator(&state.ring) {
        Some(g) => multiplication_towers(&state, g, &window.0)?,
        None => Vec::new(),
    };

    let report = RunReport {
        arity,
        shape,
        start_page: start,
        final_page,
        window: window.clone(),
        ring_json: state.ring.to_json().to_string(),
        pages,
        towers,
        extensions: Vec::new(),
        notes,
    };
    Ok((report, state))
}

/// Single-stage wrapper: one first page, one rule list.
pub fn run(
    page: &PageSpec,
    rules: &[Rule],
    window: &MultiDegree,
    max_page: i64,
) -> Result<RunReport, SseqError> {
    let stages = [Stage {
        from_page: page.start,
        ring: page.ring.clone(),
        rules: rules.to_vec(),
    }];
    Ok(run_staged(page.shape, &stages, window, max_page)?.0)
}

/// The distinguished tower generator, if the ring has exactly one: trivial
/// internal dimension and weight zero, supported in a single later
/// coordinate. Multiplication by it is the stabilization (or weight) map
/// the tower bookkeeping follows.
pub fn tower_generator(ring: &RingPresentation) -> Option<&str> {
    let mut found = None;
    for g in &ring.generators {
        let d = &g.degree.0;
        if d[0] != 0 || d[1] != 0 {
            continue;
        }
        let support: Vec<usize> = (2..d.len()).filter(|&c| d[c] > 0).collect();
        if support.len() != 1 {
            continue;
        }
        if found.is_some() {
            return None;
        }
        found = Some(g.name.as_str());
    }
    found
}

// Image rank of the composite multiplication map between two levels of a
// tower chain, as a matrix rank relative to the target's boundaries.
fn composite_rank(
    dom: &Coefficients,
    src: &DegreeState,
    dst: &DegreeState,
    gi: usize,
    k: i64,
) -> Option<(Mat, Mat)> {
    let mut m = Mat::zero(dst.monos.len(), src.monos.len());
    for (j, e) in src.monos.iter().enumerate() {
        let mut t = e.clone();
        t[gi] += k as u32;
        let &row = dst.idx.get(&t)?;
        m.set(row, j, BigRational::one());
    }
    let mz = m.mul(&src.z);
    let b = dst.boundary_mat();
    let _ = dom;
    Some((mz, b))
}

fn rank_pair(dom: &Coefficients, mz: &Mat, b: &Mat) -> usize {
    let full = rank(&Mat::hstack(&[mz, b]), dom);
    full - rank(b, dom)
}

/// Count multiplication towers over `gen` per (n, s) across the window.
/// Torsion towers are separated from torsion-free ones by comparing ranks
/// over the fraction field with ranks mod each torsion prime the groups
/// show; this is exact for elementary torsion, which is all the shipped
/// pages produce.
pub fn multiplication_towers(
    state: &RunState,
    gen: &str,
    window: &[i64],
) -> Result<Vec<TowerEntry>, SseqError> {
    let ring = &state.ring;
    let dom = &ring.coefficients;
    let gi = ring
        .generator_index(gen)
        .ok_or_else(|| SseqError::BadSpec(format!("no generator named {}", gen)))?;
    let gdeg = &ring.generators[gi].degree.0;
    let c = (2..gdeg.len())
        .find(|&c| gdeg[c] != 0)
        .ok_or_else(|| SseqError::BadSpec(format!("{} does not shift a tower coordinate", gen)))?;
    let step = gdeg[c];

    // Chains: report degrees agreeing everywhere but the tower coordinate,
    // whose values march by `step`.
    let mut chains: BTreeMap<Vec<i64>, Vec<Vec<i64>>> = BTreeMap::new();
    for d in state.degrees.keys() {
        if !within(d, window) {
            continue;
        }
        let mut key = d.clone();
        key[c] = d[c].rem_euclid(step);
        chains.entry(key).or_default().push(d.clone());
    }

    let field_char = dom.field_char();
    let chain_keys: Vec<Vec<i64>> = chains.keys().cloned().collect();
    let per_chain: Result<Vec<BTreeMap<Vec<i64>, TowerDescriptor>>, SseqError> = chain_keys
        .par_iter()
        .map(|key| {
            let mut out: BTreeMap<Vec<i64>, TowerDescriptor> = BTreeMap::new();
            let mut levels = chains[key].clone();
            levels.sort();
            // Gaps in the enumeration are genuinely zero degrees; give them
            // level slots so tower lengths count correctly.
            let lo = levels.first().unwrap()[c];
            let hi_here = window[c] - (window[c] - key[c]).rem_euclid(step);
            let count = ((hi_here - lo) / step + 1) as usize;
            let slots: Vec<Vec<i64>> = (0..count)
                .map(|i| {
                    let mut d = key.clone();
                    d[c] = lo + (i as i64) * step;
                    d
                })
                .collect();
            let states: Vec<Option<&DegreeState>> =
                slots.iter().map(|d| state.degrees.get(d)).collect();

            // Torsion primes seen along the chain.
            let mut primes: Vec<u64> = Vec::new();
            if field_char.is_none() {
                for st in states.iter().flatten() {
                    let sq = subquotient(&st.z, &st.boundary_mat(), dom)?;
                    for (p, _) in sq.descriptor.torsion {
                        if !primes.contains(&p) {
                            primes.push(p);
                        }
                    }
                }
                primes.sort_unstable();
            }

            // rank_at(dom_like, k, i): image rank of gen^k from level i.
            let rank_at = |dm: &Coefficients, k: usize, i: usize| -> usize {
                if i >= count || i + k >= count {
                    return 0;
                }
                let (Some(src), Some(dst)) = (states[i], states[i + k]) else {
                    return 0;
                };
                if k == 0 {
                    return rank_pair(dm, &src.z, &src.boundary_mat());
                }
                match composite_rank(dom, src, dst, gi, k as i64) {
                    Some((mz, b)) => rank_pair(dm, &mz, &b),
                    None => 0,
                }
            };

            // born(dm, l, i): towers born at level i still alive l-1 steps on.
            let born = |dm: &Coefficients, l: usize, i: usize| -> i64 {
                let a = rank_at(dm, l - 1, i) as i64;
                let b = if i == 0 { 0 } else { rank_at(dm, l, i - 1) as i64 };
                a - b
            };

            for i in 0..count {
                if states[i].is_none() {
                    continue;
                }
                let ledge = count - i;
                let ns = vec![slots[i][0], slots[i][1]];
                let entry = out.entry(ns).or_default();

                let full_edge = born(dom, ledge, i).max(0) as usize;
                let mut counted_edge = 0usize;
                let mut full_trunc: BTreeMap<u32, usize> = BTreeMap::new();
                for l in 1..ledge {
                    let exact = (born(dom, l, i) - born(dom, l + 1, i)).max(0) as usize;
                    if exact > 0 {
                        *full_trunc.entry(l as u32).or_insert(0) += exact;
                    }
                }

                if let Some(_p) = field_char {
                    entry.free_p += full_edge;
                    counted_edge += full_edge;
                    for (l, n) in &full_trunc {
                        for _ in 0..*n {
                            entry.truncated_p.push(*l);
                        }
                    }
                    let _ = counted_edge;
                } else {
                    // Torsion-free towers from fraction-field ranks.
                    entry.free_z += full_edge;
                    for (l, n) in &full_trunc {
                        for _ in 0..*n {
                            entry.truncated_z.push(*l);
                        }
                    }
                    // Prime-torsion towers from the mod-p excess.
                    for &p in &primes {
                        let fp = Coefficients::Fp { p };
                        let edge_p = (born(&fp, ledge, i) - born(dom, ledge, i)).max(0) as usize;
                        entry.free_p += edge_p;
                        for l in 1..ledge {
                            let exact_p = (born(&fp, l, i) - born(&fp, l + 1, i))
                                - (born(dom, l, i) - born(dom, l + 1, i));
                            let exact_p = exact_p.max(0) as usize;
                            for _ in 0..exact_p {
                                entry.truncated_p.push(l as u32);
                            }
                        }
                    }
                }
            }
            Ok(out)
        })
        .collect();

    let mut merged: BTreeMap<Vec<i64>, TowerDescriptor> = BTreeMap::new();
    for chain in per_chain? {
        for (ns, t) in chain {
            let e = merged.entry(ns).or_default();
            e.free_z += t.free_z;
            e.free_p += t.free_p;
            e.truncated_z.extend(t.truncated_z);
            e.truncated_p.extend(t.truncated_p);
        }
    }
    Ok(merged
        .into_iter()
        .filter(|(_, t)| !t.is_empty())
        .map(|(degree, mut tower)| {
            tower.truncated_z.sort_unstable();
            tower.truncated_p.sort_unstable();
            TowerEntry { degree, tower }
        })
        .collect())
}

// Derive the stabilized run data from a filtered stage: drop the tower
// generator and the birth coordinate, and set the generator to one in the
// relations.
fn stabilized_stage(stage: &Stage, gen: &str) -> Result<Stage, SseqError> {
    let ring = &stage.ring;
    let gi = ring
        .generator_index(gen)
        .ok_or_else(|| SseqError::BadSpec(format!("stage ring lacks the class {}", gen)))?;
    let n = ring.nvars();
    let mut gens = Vec::new();
    for (i, g) in ring.generators.iter().enumerate() {
        if i == gi {
            continue;
        }
        gens.push(Generator {
            name: g.name.clone(),
            degree: MultiDegree(g.degree.0[..3].to_vec()),
            inverted: false,
        });
    }
    let skeleton = RingPresentation::new(ring.coefficients.clone(), gens.clone(), Vec::new())?;
    let mut images = Vec::new();
    let mut k = 0usize;
    for i in 0..n {
        if i == gi {
            images.push(Poly::constant(n - 1, BigRational::one()));
        } else {
            images.push(Poly::variable(n - 1, k));
            k += 1;
        }
    }
    let mut rel_sources = Vec::new();
    for rel in &ring.relation_sources {
        let p = ring.parse(rel)?;
        let q = p.substitute(&images, n - 1);
        if q.is_zero() {
            continue;
        }
        rel_sources.push(skeleton.format_poly(&q));
    }
    let stable_ring = RingPresentation::new(ring.coefficients.clone(), gens, rel_sources)?;
    Ok(Stage {
        from_page: stage.from_page,
        ring: stable_ring,
        rules: stage.rules.clone(),
    })
}

/// Filtered (four-graded) replay from stable rule data. Each rule's target
/// is multiplied by the tower class to the page's power, realizing the lift
/// property d_k(x) = a^k y. The same stages with the tower class set to one
/// are run in the stable three-graded form, and the filtered run's deep
/// columns are checked against the stable groups degree by degree.
pub fn uaahss_lift(
    stages: &[Stage],
    window: &MultiDegree,
    max_page: i64,
) -> Result<RunReport, SseqError> {
    if stages.is_empty() {
        return Err(SseqError::BadSpec("no stages".into()));
    }
    if stages[0].ring.arity() != 4 || window.arity() != 4 {
        return Err(SseqError::BadSpec(
            "the filtered replay needs four gradings".into(),
        ));
    }
    let gen = tower_generator(&stages[0].ring)
        .ok_or_else(|| {
            SseqError::BadSpec("no unique stabilization class in the first stage".into())
        })?
        .to_string();

    let mut lifted = Vec::new();
    for stage in stages {
        if tower_generator(&stage.ring) != Some(gen.as_str()) {
            return Err(SseqError::BadSpec(
                "every stage must carry the same stabilization class".into(),
            ));
        }
        let rules = stage
            .rules
            .iter()
            .map(|rule| Rule {
                page: rule.page,
                source: rule.source.clone(),
                target: if rule.target.trim() == "0" {
                    rule.target.clone()
                } else {
                    format!("({}) * {}^{}", rule.target, gen, rule.page)
                },
                citation: rule.citation.clone(),
            })
            .collect();
        lifted.push(Stage {
            from_page: stage.from_page,
            ring: stage.ring.clone(),
            rules,
        });
    }

    let (mut report, state) = run_staged(DifferentialShape::Cell, &lifted, window, max_page)?;

    let stable_stages: Result<Vec<Stage>, SseqError> =
        stages.iter().map(|s| stabilized_stage(s, &gen)).collect();
    let stable_stages = stable_stages?;
    let stable_window = MultiDegree(window.0[..3].to_vec());
    let (stable_report, _) = run_staged(
        DifferentialShape::Cell,
        &stable_stages,
        &stable_window,
        max_page,
    )?;

    // Setting the tower class to one must recover the stable answer: deep
    // in the filtration the (n, s, birth) column stabilizes to the stable
    // group of that birth degree.
    let start = stages[0].from_page;
    let m_cap = window.0[2];
    let slack = (max_page - start + 1).max(0);
    let mut compared = 0usize;
    for n in 0..=window.0[0] {
        for s in 0..=window.0[1] {
            for u in 0..=window.0[3].min(m_cap - slack) {
                let stable = stable_report.group(stable_report.final_page, &[n, s, u]);
                let unstable = report.group(report.final_page, &[n, s, m_cap, u]);
                if stable != unstable {
                    return Err(SseqError::CollapseMismatch {
                        degree: vec![n, s, u],
                        stable: stable.to_string(),
                        unstable: unstable.to_string(),
                    });
                }
                compared += 1;
            }
        }
    }
    report.notes.push(format!(
        "stabilization check: {} columns agree with the three-graded run",
        compared
    ));
    let _ = state;
    Ok(report)
}

/// Record a multiplicative relation the page filtration hides. The relation
/// must be homogeneous: both sides are parsed in the final ring and their
/// degrees compared, except in the birth coordinate of a four-graded run,
/// which a hidden extension is allowed to lower. Pure bookkeeping; groups
/// are untouched.
pub fn register_hidden_extension(
    report: &mut RunReport,
    relation: &str,
) -> Result<(), SseqError> {
    let ring = report.final_ring()?;
    let parts: Vec<&str> = relation.split('=').collect();
    if parts.len() != 2 {
        return Err(SseqError::BadSpec(format!(
            "extension `{}` must be a single equation",
            relation
        )));
    }
    let lhs = ring.parse(parts[0].trim())?;
    let rhs = ring.parse(parts[1].trim())?;
    let ld = ring.degree_of(&lhs)?;
    let rd = ring.degree_of(&rhs)?;
    let visible = if report.arity == 4 {
        report.arity - 1
    } else {
        report.arity
    };
    match (ld, rd) {
        (Some(a), Some(b)) if a.0[..visible] != b.0[..visible] => {
            return Err(SseqError::ExtensionDegreeMismatch {
                lhs: a.0,
                rhs: b.0,
            });
        }
        (None, None) => {
            report
                .notes
                .push(format!("extension `{}` has no content (0 = 0)", relation));
            return Ok(());
        }
        _ => {}
    }
    report.extensions.push(format!(
        "{} = {}",
        ring.format_poly(&lhs),
        ring.format_poly(&rhs)
    ));
    Ok(())
}

/// Degreewise comparison of a finished run against a target presentation.
/// With equal arities the final groups are compared piecewise; a
/// four-graded run against a three-graded target first sums the birth
/// column over its window, which is the associated-graded comparison.
pub fn compare_assoc_graded(
    report: &RunReport,
    target: &RingPresentation,
    window: &MultiDegree,
) -> Result<Vec<DiffRow>, SseqError> {
    let ta = target.arity();
    if window.arity() != ta {
        return Err(SseqError::BadSpec("window arity mismatch".into()));
    }
    if !(report.arity == ta || report.arity == ta + 1) {
        return Err(SseqError::BadSpec(
            "run and target gradings are incompatible".into(),
        ));
    }
    let mut degrees: Vec<Vec<i64>> = vec![vec![]];
    for &w in &window.0 {
        let mut next = Vec::new();
        for d in &degrees {
            for v in 0..=w {
                let mut e = d.clone();
                e.push(v);
                next.push(e);
            }
        }
        degrees = next;
    }
    let rows: Result<Vec<Option<DiffRow>>, SseqError> = degrees
        .par_iter()
        .map(|d| {
            let run_group = if report.arity == ta {
                report.group(report.final_page, d)
            } else {
                let mut sum = GroupDescriptor::zero();
                let u_hi = if report.window.0.len() == 4 {
                    report.window.0[3].min(d[2])
                } else {
                    d[2]
                };
                for u in 0..=u_hi {
                    let mut e = d.clone();
                    e.push(u);
                    sum = sum.direct_sum(&report.group(report.final_page, &e));
                }
                sum
            };
            let tgt = target.graded_piece(&MultiDegree(d.clone()))?.group;
            if run_group != tgt {
                Ok(Some(DiffRow {
                    degree: d.clone(),
                    run: run_group,
                    target: tgt,
                }))
            } else {
                Ok(None)
            }
        })
        .collect();
    Ok(rows?.into_iter().flatten().collect())
}

/// Rebuild integral groups from a mod-p run whose tower class records the
/// p-adic weight: towers reaching the window edge contribute a copy of the
/// p-local integers, towers of length l contribute Z/p^l. Returns the
/// groups per (n, s).
pub fn weight_tower_reassembly(
    state: &RunState,
    window: &[i64],
) -> Result<BTreeMap<Vec<i64>, GroupDescriptor>, SseqError> {
    let p = state
        .ring
        .coefficients
        .field_char()
        .ok_or_else(|| SseqError::BadSpec("reassembly needs prime-field pages".into()))?;
    let gen = tower_generator(&state.ring).ok_or_else(|| {
        SseqError::BadSpec("reassembly needs a unique weight class".into())
    })?;
    let towers = multiplication_towers(state, gen, window)?;
    let mut out = BTreeMap::new();
    for entry in towers {
        let mut g = GroupDescriptor {
            free: entry.tower.free_p + entry.tower.free_z,
            torsion: Vec::new(),
        };
        for l in entry
            .tower
            .truncated_p
            .iter()
            .chain(entry.tower.truncated_z.iter())
        {
            g.torsion.push((p, *l));
        }
        g.torsion.sort_unstable();
        out.insert(entry.degree, g);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inv(primes: &[u64]) -> Coefficients {
        Coefficients::Inverted {
            primes: primes.iter().copied().collect(),
        }
    }

    fn zp(p: u64) -> GroupDescriptor {
        GroupDescriptor {
            free: 0,
            torsion: vec![(p, 1)],
        }
    }

    fn wdeg(v: &[i64]) -> MultiDegree {
        MultiDegree(v.to_vec())
    }

    fn mk_ring(c: Coefficients, gens: &[(&str, &[i64])], rels: &[&str]) -> RingPresentation {
        let gens = gens
            .iter()
            .map(|(n, d)| Generator {
                name: n.to_string(),
                degree: MultiDegree(d.to_vec()),
                inverted: false,
            })
            .collect();
        RingPresentation::new(c, gens, rels.iter().map(|r| r.to_string()).collect())
            .expect("test ring")
    }

    fn rule(page: i64, source: &str, target: &str) -> Rule {
        Rule {
            page,
            source: source.to_string(),
            target: target.to_string(),
            citation: String::new(),
        }
    }

    // Z[1/2][z, tau]/(tau^2, z*tau) with one first-page differential z -> tau.
    fn cusp_ring() -> RingPresentation {
        mk_ring(
            inv(&[2]),
            &[("z", &[2, 0, 1]), ("tau", &[1, 1, 0])],
            &["tau^2", "z*tau"],
        )
    }

    #[test]
    fn cusp_toy_page_two() {
        let page = PageSpec {
            ring: cusp_ring(),
            shape: DifferentialShape::Cell,
            start: 1,
        };
        let report = run(&page, &[rule(1, "z", "tau")], &wdeg(&[12, 2, 6]), 2).unwrap();
        assert_eq!(report.final_page, 2);
        assert_eq!(report.group(2, &[0, 0, 0]), GroupDescriptor::free(1));
        for k in 2..=6 {
            assert_eq!(
                report.group(2, &[2 * k, 0, k]),
                GroupDescriptor::free(1),
                "z^{} column",
                k
            );
        }
        assert!(report.group(2, &[2, 0, 1]).is_zero());
        assert!(report.group(2, &[1, 1, 0]).is_zero());

        // the page-two groups are the cuspidal cubic's coordinate ring
        let target = mk_ring(
            inv(&[2]),
            &[("x", &[4, 0, 2]), ("y", &[6, 0, 3])],
            &["y^2 - x^3"],
        );
        let rows = compare_assoc_graded(&report, &target, &wdeg(&[12, 2, 6])).unwrap();
        assert!(rows.is_empty(), "{:?}", rows);

        let back = RunReport::from_json_str(&report.to_json_string()).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn no_rules_keeps_the_first_page() {
        let page = PageSpec {
            ring: cusp_ring(),
            shape: DifferentialShape::Cell,
            start: 1,
        };
        let report = run(&page, &[], &wdeg(&[8, 2, 4]), 3).unwrap();
        assert_eq!(report.final_page, 1);
        assert_eq!(report.pages.len(), 1);
        assert_eq!(report.group(1, &[2, 0, 1]), GroupDescriptor::free(1));
        assert_eq!(report.group(1, &[1, 1, 0]), GroupDescriptor::free(1));
    }

    #[test]
    fn compare_flags_every_nonzero_degree() {
        let page = PageSpec {
            ring: cusp_ring(),
            shape: DifferentialShape::Cell,
            start: 1,
        };
        let report = run(&page, &[rule(1, "z", "tau")], &wdeg(&[12, 2, 6]), 2).unwrap();
        let trivial = mk_ring(inv(&[2]), &[("w", &[2, 0, 1])], &["1"]);
        let rows = compare_assoc_graded(&report, &trivial, &wdeg(&[12, 2, 6])).unwrap();
        assert_eq!(rows.len(), report.final_groups().len());
        assert!(rows.iter().all(|r| r.target.is_zero() && !r.run.is_zero()));
    }

    fn descent_ring() -> RingPresentation {
        mk_ring(
            Coefficients::LocalAt { p: 2 },
            &[
                ("h1", &[1, 1]),
                ("b2", &[4, 0]),
                ("b3", &[6, 0]),
                ("b4", &[8, 0]),
                ("b8", &[16, 0]),
                ("D", &[24, 0]),
            ],
            &[
                "2*h1",
                "b3*h1",
                "b4*h1",
                "4*b8 + b4^2 - b2*b3^2",
                "D + b2^2*b8 + 8*b4^3 + 27*b3^4 - 9*b2*b3^2*b4",
            ],
        )
    }

    #[test]
    fn descent_tower_page_four() {
        let page = PageSpec {
            ring: descent_ring(),
            shape: DifferentialShape::Descent,
            start: 2,
        };
        let report = run(&page, &[rule(3, "b2", "h1^3")], &wdeg(&[16, 8]), 4).unwrap();
        assert_eq!(report.final_page, 4);
        // the d3 kernel on the b2 line is the index-two sublattice
        let e = report
            .entries(4)
            .unwrap()
            .iter()
            .find(|e| e.degree == [4, 0])
            .unwrap()
            .clone();
        assert_eq!(e.group, GroupDescriptor::free(1));
        assert!(e.generators[0].contains("2*b2"), "{:?}", e.generators);
        assert_eq!(report.group(3, &[3, 3]), zp(2));
        assert!(report.group(4, &[3, 3]).is_zero());
        assert_eq!(report.group(4, &[8, 0]), GroupDescriptor::free(2));
        assert_eq!(report.group(4, &[1, 1]), zp(2));
        assert_eq!(report.group(4, &[2, 2]), zp(2));
        assert_eq!(report.group(4, &[6, 0]), GroupDescriptor::free(1));
        assert_eq!(report.group(4, &[10, 0]), GroupDescriptor::free(1));
        // b2*h1^3 supports a differential onto h1^6, so both ends vanish
        assert!(report.group(4, &[7, 3]).is_zero());
        assert!(report.group(4, &[6, 6]).is_zero());
    }

    // One-stage filtered model: a tower class a, a torsion-line class tau,
    // and z with d_1(z) = a*tau after lifting.
    fn mini_stage() -> Stage {
        Stage {
            from_page: 1,
            ring: mk_ring(
                inv(&[2]),
                &[
                    ("a", &[0, 0, 1, 0]),
                    ("tau", &[1, 1, 0, 0]),
                    ("z", &[2, 0, 1, 1]),
                ],
                &["tau^2", "z*tau"],
            ),
            rules: vec![rule(1, "z", "tau")],
        }
    }

    #[test]
    fn filtered_lift_mini() {
        let report = uaahss_lift(&[mini_stage()], &wdeg(&[12, 2, 6, 6]), 2).unwrap();
        assert_eq!(report.group(2, &[4, 0, 2, 2]), GroupDescriptor::free(1));
        assert!(report.group(2, &[2, 0, 1, 1]).is_zero());
        assert_eq!(report.group(2, &[1, 1, 0, 0]), GroupDescriptor::free(1));
        assert!(report.group(2, &[1, 1, 1, 0]).is_zero());
        // tau carries a tower of length one; the unit and z^2 towers are full
        let t = report.tower(&[1, 1]).unwrap();
        assert_eq!((t.free_z, t.truncated_z.as_slice()), (0, &[1u32][..]));
        assert_eq!(report.tower(&[0, 0]).unwrap().free_z, 1);
        assert_eq!(report.tower(&[4, 0]).unwrap().free_z, 1);
        assert!(report.tower(&[2, 0]).is_none());
        assert!(report
            .notes
            .iter()
            .any(|n| n.contains("stabilization check")));
        assert!(report.notes.iter().any(|n| n.contains("d1(z) = (tau) * a^1")));
    }

    #[test]
    fn reports_are_thread_count_independent() {
        fn go() -> String {
            uaahss_lift(&[mini_stage()], &wdeg(&[10, 2, 5, 5]), 2)
                .unwrap()
                .to_json_string()
        }
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(go);
        let four = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(go);
        assert_eq!(one, four);
    }

    // Three-stage filtered replay: a cusp page, its cubic re-presentation,
    // and the page-three renaming with the two torsion classes born in the
    // filtration. Rules: d1(z) = tau, d2(x) = alpha, d4(g5) = beta, each
    // lifted by the tower class.
    fn jf_stage1(c: &Coefficients) -> Stage {
        Stage {
            from_page: 1,
            ring: mk_ring(
                c.clone(),
                &[
                    ("a", &[0, 0, 1, 0]),
                    ("tau", &[1, 1, 0, 0]),
                    ("z", &[2, 0, 1, 1]),
                    ("alpha", &[3, 1, 0, 0]),
                    ("beta", &[10, 2, 0, 0]),
                    ("c4", &[8, 0, 0, 0]),
                    ("c6", &[12, 0, 0, 0]),
                    ("Delta", &[24, 0, 0, 0]),
                ],
                &[
                    "tau^2",
                    "z*tau",
                    "alpha^2",
                    "3*alpha",
                    "3*beta",
                    "c4*alpha",
                    "c4*beta",
                    "c6*alpha",
                    "c6*beta",
                    "1728*Delta - c6^2 + c4^3",
                ],
            ),
            rules: vec![rule(1, "z", "tau")],
        }
    }

    fn jf_stage2(c: &Coefficients) -> Stage {
        Stage {
            from_page: 2,
            ring: mk_ring(
                c.clone(),
                &[
                    ("a", &[0, 0, 1, 0]),
                    ("tau", &[1, 1, 0, 0]),
                    ("x", &[4, 0, 2, 2]),
                    ("y", &[6, 0, 3, 3]),
                    ("alpha", &[3, 1, 0, 0]),
                    ("beta", &[10, 2, 0, 0]),
                    ("c4", &[8, 0, 0, 0]),
                    ("c6", &[12, 0, 0, 0]),
                    ("Delta", &[24, 0, 0, 0]),
                ],
                &[
                    "tau^2",
                    "x*tau",
                    "y*tau",
                    "a*tau",
                    "y^2 - x^3",
                    "alpha^2",
                    "3*alpha",
                    "3*beta",
                    "c4*alpha",
                    "c4*beta",
                    "c6*alpha",
                    "c6*beta",
                    "1728*Delta - c6^2 + c4^3",
                ],
            ),
            rules: vec![rule(2, "x", "alpha")],
        }
    }

    fn jf_stage3(c: &Coefficients) -> Stage {
        Stage {
            from_page: 3,
            ring: mk_ring(
                c.clone(),
                &[
                    ("a", &[0, 0, 1, 0]),
                    ("tau", &[1, 1, 0, 0]),
                    ("alpha", &[3, 1, 0, 0]),
                    ("beta", &[10, 2, 0, 0]),
                    ("c4", &[8, 0, 0, 0]),
                    ("c6", &[12, 0, 0, 0]),
                    ("Delta", &[24, 0, 0, 0]),
                    ("b2", &[4, 0, 2, 2]),
                    ("b3", &[6, 0, 3, 3]),
                    ("b4", &[8, 0, 4, 4]),
                    ("gamma", &[7, 1, 2, 2]),
                    ("g5", &[11, 1, 4, 4]),
                ],
                &[
                    "tau^2",
                    "a*tau",
                    "tau*b2",
                    "tau*b3",
                    "tau*b4",
                    "tau*gamma",
                    "tau*g5",
                    "a^2*alpha",
                    "a^2*gamma",
                    "b2^2 - 3*b4",
                    "b2*b4 - 9*b3^2",
                    "b4^2 - 3*b2*b3^2",
                    "b2*alpha",
                    "b4*alpha",
                    "b2*beta",
                    "b4*beta",
                    "b2*gamma",
                    "b4*gamma",
                    "b2*g5",
                    "b4*g5",
                    "3*gamma",
                    "gamma*alpha",
                    "gamma^2",
                    "gamma*c4",
                    "gamma*c6",
                    "3*g5",
                    "g5*alpha",
                    "g5*gamma",
                    "g5^2",
                    "g5*c4",
                    "g5*c6",
                    "alpha^2",
                    "3*alpha",
                    "3*beta",
                    "c4*alpha",
                    "c4*beta",
                    "c6*alpha",
                    "c6*beta",
                    "1728*Delta - c6^2 + c4^3",
                ],
            ),
            rules: vec![rule(4, "g5", "beta")],
        }
    }

    #[test]
    fn staged_filtration_replay() {
        let c = inv(&[2]);
        let stages = [jf_stage1(&c), jf_stage2(&c), jf_stage3(&c)];
        let mut report = uaahss_lift(&stages, &wdeg(&[12, 3, 7, 7]), 5).unwrap();
        assert_eq!(report.final_page, 5);

        // page three carries the index-three kernel on the x line
        let e3 = report.entries(3).unwrap();
        let x_line = e3.iter().find(|e| e.degree == [4, 0, 2, 2]).unwrap();
        assert_eq!(x_line.group, GroupDescriptor::free(1));
        assert!(x_line.generators[0].contains("3*x"), "{:?}", x_line.generators);

        assert_eq!(report.group(4, &[11, 1, 4, 4]), zp(3));
        assert_eq!(report.group(4, &[10, 2, 4, 0]), zp(3));
        assert!(report.group(5, &[11, 1, 4, 4]).is_zero());
        assert!(report.group(5, &[10, 2, 4, 0]).is_zero());
        assert_eq!(report.group(5, &[7, 1, 2, 2]), zp(3));
        assert_eq!(report.group(5, &[4, 0, 2, 2]), GroupDescriptor::free(1));

        // the beta tower dies exactly where the page-four differential says
        let bt = report.tower(&[10, 2]).unwrap();
        assert_eq!(bt.truncated_p.as_slice(), &[4]);
        assert_eq!(bt.free_z + bt.free_p, 0);
        assert_eq!(report.tower(&[1, 1]).unwrap().truncated_z.as_slice(), &[1]);
        assert_eq!(report.tower(&[0, 0]).unwrap().free_z, 1);

        assert_eq!(
            report
                .notes
                .iter()
                .filter(|n| n.contains("re-presentation verified"))
                .count(),
            2
        );
        assert!(report
            .notes
            .iter()
            .any(|n| n.contains("stabilization check")));

        register_hidden_extension(&mut report, "tau*b3 = 2*a*gamma").unwrap();
        register_hidden_extension(&mut report, "gamma*alpha = a^2*beta").unwrap();
        register_hidden_extension(&mut report, "0 = 0").unwrap();
        assert_eq!(report.extensions.len(), 2);
        assert!(report.extensions[0].contains("2*a*gamma"));
        assert!(report.extensions[1].contains("a^2*beta"));
        assert!(report.notes.iter().any(|n| n.contains("no content")));
        let err = register_hidden_extension(&mut report, "tau = alpha").unwrap_err();
        assert!(matches!(err, SseqError::ExtensionDegreeMismatch { .. }));
    }

    #[test]
    fn odd_primes_collapse() {
        let c = inv(&[2, 3]);
        let stages = [jf_stage1(&c), jf_stage2(&c), jf_stage3(&c)];
        let report = uaahss_lift(&stages, &wdeg(&[12, 3, 6, 6]), 5).unwrap();
        // with 3 inverted every torsion class dies on sight: survivors sit
        // on the zero line or are weight-zero tau multiples
        for e in report.final_groups() {
            assert!(
                e.degree[1] == 0 || e.degree[2] == 0,
                "unexpected surviving class at {:?}",
                e.degree
            );
        }
        assert!(report.notes.iter().any(|n| n.contains("treated as zero")));
    }

    #[test]
    fn bockstein_weight_reassembly() {
        let ring = mk_ring(
            Coefficients::Fp { p: 2 },
            &[
                ("q0", &[0, 0, 2]),
                ("a1", &[2, 0, 1]),
                ("h1", &[1, 1, 0]),
                ("a3", &[6, 0, 0]),
            ],
            &["a3*h1"],
        );
        let stages = [Stage {
            from_page: 1,
            ring,
            rules: vec![rule(1, "a1", "q0*h1")],
        }];
        let (report, state) =
            run_staged(DifferentialShape::Bockstein, &stages, &wdeg(&[6, 3, 8]), 2).unwrap();
        assert_eq!(report.final_page, 2);
        let groups = weight_tower_reassembly(&state, &[6, 3, 8]).unwrap();
        assert_eq!(groups.get(&vec![0, 0]), Some(&GroupDescriptor::free(1)));
        assert_eq!(groups.get(&vec![1, 1]), Some(&zp(2)));
        assert_eq!(groups.get(&vec![2, 2]), Some(&zp(2)));
        // a1^2 restarts an edge tower: its differential doubles and dies
        assert_eq!(groups.get(&vec![4, 0]), Some(&GroupDescriptor::free(1)));
        assert_eq!(groups.get(&vec![6, 0]), Some(&GroupDescriptor::free(1)));
        assert_eq!(groups.get(&vec![5, 1]), Some(&zp(2)));
        for d in [[3i64, 1], [2, 0]] {
            assert!(
                groups.get(&d.to_vec()).map(|g| g.is_zero()).unwrap_or(true),
                "expected nothing at {:?}",
                d
            );
        }
    }

    #[test]
    fn rules_must_realize_the_shift() {
        let page = PageSpec {
            ring: cusp_ring(),
            shape: DifferentialShape::Cell,
            start: 1,
        };
        let err = run(&page, &[rule(1, "z", "z")], &wdeg(&[8, 2, 4]), 2).unwrap_err();
        assert!(matches!(err, SseqError::InconsistentRule { .. }), "{:?}", err);
    }

    #[test]
    fn malformed_runs_are_rejected() {
        let page = PageSpec {
            ring: cusp_ring(),
            shape: DifferentialShape::Cell,
            start: 1,
        };
        let err = run(&page, &[], &wdeg(&[8, 2]), 2).unwrap_err();
        assert!(matches!(err, SseqError::BadSpec(_)), "{:?}", err);
        let err = run(&page, &[rule(0, "z", "tau")], &wdeg(&[8, 2, 4]), 2).unwrap_err();
        assert!(matches!(err, SseqError::BadSpec(_)), "{:?}", err);
        let stages = [
            Stage {
                from_page: 1,
                ring: cusp_ring(),
                rules: vec![],
            },
            Stage {
                from_page: 9,
                ring: cusp_ring(),
                rules: vec![],
            },
        ];
        let err = run_staged(DifferentialShape::Cell, &stages, &wdeg(&[8, 2, 4]), 3)
            .map(|_| ())
            .unwrap_err();
        assert!(matches!(err, SseqError::BadSpec(_)), "{:?}", err);
    }

    #[test]
    fn handoff_rejects_a_wrong_claim() {
        // claiming that nothing happened on page one must fail the handoff
        let stages = [
            Stage {
                from_page: 1,
                ring: cusp_ring(),
                rules: vec![rule(1, "z", "tau")],
            },
            Stage {
                from_page: 2,
                ring: cusp_ring(),
                rules: vec![],
            },
        ];
        let err = run_staged(DifferentialShape::Cell, &stages, &wdeg(&[8, 2, 4]), 2)
            .map(|_| ())
            .unwrap_err();
        assert!(matches!(err, SseqError::HandoffMismatch { .. }), "{:?}", err);
    }

    #[test]
    fn relation_image_must_stay_in_the_ideal() {
        // d(t) = u makes d(t^2) = 2*t*u, which is not a multiple of t^2
        let ring = mk_ring(
            Coefficients::Int,
            &[("t", &[4, 2]), ("u", &[3, 4])],
            &["t^2"],
        );
        let page = PageSpec {
            ring,
            shape: DifferentialShape::Descent,
            start: 2,
        };
        let err = run(&page, &[rule(2, "t", "u")], &wdeg(&[8, 6]), 3).unwrap_err();
        assert!(
            matches!(err, SseqError::RuleBreaksRelations { .. }),
            "{:?}",
            err
        );
    }

    #[test]
    fn composite_differential_must_vanish() {
        let ring = mk_ring(
            Coefficients::Int,
            &[("t", &[6, 0]), ("u", &[5, 2]), ("v", &[4, 4])],
            &[],
        );
        let page = PageSpec {
            ring,
            shape: DifferentialShape::Descent,
            start: 2,
        };
        let err = run(
            &page,
            &[rule(2, "t", "u"), rule(2, "u", "v")],
            &wdeg(&[6, 4]),
            3,
        )
        .unwrap_err();
        assert!(matches!(err, SseqError::SquareNonzero { .. }), "{:?}", err);
    }
}
