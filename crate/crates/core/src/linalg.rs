//! Exact dense linear algebra over the rings in [`crate::coeffs`].
//!
//! Matrices hold `BigRational` entries whose denominators must be units of
//! the active coefficient ring. Smith normal form with recorded transforms
//! is the one primitive; kernels, solves, cokernel descriptors and
//! subquotients are all derived from it. Everything is deterministic: no
//! hashing, no randomized pivoting.

use crate::coeffs::{prime_power_factors, Coefficients};
use num::bigint::BigInt;
use num::rational::BigRational;
use num::{Integer, One, Zero};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LinalgError {
    #[error("matrix entry {entry} at ({row},{col}) is not an element of {domain}")]
    EntryOutsideDomain {
        entry: String,
        row: usize,
        col: usize,
        domain: String,
    },
    #[error("vector is not in the span of the given columns (first obstruction at row {row})")]
    NotInSpan { row: usize },
}

/// Dense row-major matrix of exact rationals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    data: Vec<BigRational>,
}

impl Mat {
    pub fn zero(rows: usize, cols: usize) -> Mat {
        Mat {
            rows,
            cols,
            data: vec![BigRational::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Mat {
        let mut m = Mat::zero(n, n);
        for i in 0..n {
            m.set(i, i, BigRational::one());
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<BigRational>>) -> Mat {
        let n = rows.len();
        let c = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == c), "ragged rows");
        Mat {
            rows: n,
            cols: c,
            data: rows.into_iter().flatten().collect(),
        }
    }

    /// Build from column vectors living in an ambient space of `rows`
    /// coordinates.
    pub fn from_cols(rows: usize, cols: &[Vec<BigRational>]) -> Mat {
        let mut m = Mat::zero(rows, cols.len());
        for (j, col) in cols.iter().enumerate() {
            assert_eq!(col.len(), rows, "column length mismatch");
            for (i, x) in col.iter().enumerate() {
                m.set(i, j, x.clone());
            }
        }
        m
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> &BigRational {
        &self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: BigRational) {
        self.data[i * self.cols + j] = v;
    }

    pub fn col(&self, j: usize) -> Vec<BigRational> {
        (0..self.rows).map(|i| self.at(i, j).clone()).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|x| x.is_zero())
    }

    pub fn mul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "dimension mismatch in mul");
        let mut out = Mat::zero(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.at(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let b = other.at(k, j);
                    if !b.is_zero() {
                        let v = out.at(i, j) + a * b;
                        out.set(i, j, v);
                    }
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[BigRational]) -> Vec<BigRational> {
        assert_eq!(self.cols, v.len(), "dimension mismatch in mul_vec");
        (0..self.rows)
            .map(|i| {
                let mut acc = BigRational::zero();
                for j in 0..self.cols {
                    let a = self.at(i, j);
                    if !a.is_zero() && !v[j].is_zero() {
                        acc += a * &v[j];
                    }
                }
                acc
            })
            .collect()
    }

    /// Concatenate blocks left-to-right; all must share a row count.
    pub fn hstack(parts: &[&Mat]) -> Mat {
        assert!(!parts.is_empty());
        let rows = parts[0].rows;
        assert!(parts.iter().all(|p| p.rows == rows), "row count mismatch");
        let cols = parts.iter().map(|p| p.cols).sum();
        let mut m = Mat::zero(rows, cols);
        let mut off = 0;
        for p in parts {
            for i in 0..rows {
                for j in 0..p.cols {
                    m.set(i, off + j, p.at(i, j).clone());
                }
            }
            off += p.cols;
        }
        m
    }

    /// Reduce every entry to the canonical representative for `dom`
    /// (a no-op except over a prime field).
    pub fn normalized(&self, dom: &Coefficients) -> Mat {
        let mut m = self.clone();
        for x in &mut m.data {
            *x = normalize_entry(dom, x);
        }
        m
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for j in 0..self.cols {
            self.data.swap(a * self.cols + j, b * self.cols + j);
        }
    }

    fn swap_cols(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for i in 0..self.rows {
            self.data.swap(i * self.cols + a, i * self.cols + b);
        }
    }

    /// row[i] += c * row[j]
    fn add_row(&mut self, i: usize, j: usize, c: &BigRational, dom: &Coefficients) {
        assert_ne!(i, j);
        for k in 0..self.cols {
            let v = self.at(j, k);
            if !v.is_zero() {
                let nv = normalize_entry(dom, &(self.at(i, k) + c * v));
                self.set(i, k, nv);
            }
        }
    }

    /// col[i] += c * col[j]
    fn add_col(&mut self, i: usize, j: usize, c: &BigRational, dom: &Coefficients) {
        assert_ne!(i, j);
        for k in 0..self.rows {
            let v = self.at(k, j);
            if !v.is_zero() {
                let nv = normalize_entry(dom, &(self.at(k, i) + c * v));
                self.set(k, i, nv);
            }
        }
    }

    fn scale_row(&mut self, i: usize, u: &BigRational, dom: &Coefficients) {
        for k in 0..self.cols {
            let nv = normalize_entry(dom, &(self.at(i, k) * u));
            self.set(i, k, nv);
        }
    }

    fn scale_col(&mut self, j: usize, u: &BigRational, dom: &Coefficients) {
        for k in 0..self.rows {
            let nv = normalize_entry(dom, &(self.at(k, j) * u));
            self.set(k, j, nv);
        }
    }
}

fn mod_inverse(a: &BigInt, p: &BigInt) -> BigInt {
    let a = a.mod_floor(p);
    let eg = a.extended_gcd(p);
    assert!(eg.gcd.is_one(), "residue {} not invertible mod {}", a, p);
    eg.x.mod_floor(p)
}

/// Canonical representative of `x` in `dom`: over F_p this is the integer
/// in [0,p) congruent to it, elsewhere `x` itself.
pub fn normalize_entry(dom: &Coefficients, x: &BigRational) -> BigRational {
    match dom {
        Coefficients::Fp { p } => {
            if x.is_zero() {
                return BigRational::zero();
            }
            let bp = BigInt::from(*p);
            let d_inv = mod_inverse(x.denom(), &bp);
            BigRational::from((x.numer() * d_inv).mod_floor(&bp))
        }
        _ => x.clone(),
    }
}

/// Quotient `q` in the ring with `core(b - q*a) < core(a)` or `b - q*a = 0`.
/// Over the localization the quotient may legitimately be zero when `b`
/// already has smaller core; the caller re-pivots in that case.
fn euclid_quotient(dom: &Coefficients, a: &BigRational, b: &BigRational) -> BigRational {
    debug_assert!(!a.is_zero() && !b.is_zero());
    match dom {
        Coefficients::Int => (b / a).round(),
        Coefficients::Inverted { .. } => {
            let ca = BigRational::from(dom.core(a));
            let cb = BigRational::from(dom.core(b));
            let t = (&cb / &ca).round();
            // b = u_b*cb, a = u_a*ca; q = t*u_b/u_a leaves remainder u_b*(cb - t*ca)
            let unit_b = b / &cb;
            let unit_a = a / &ca;
            t * unit_b / unit_a
        }
        Coefficients::LocalAt { .. } => {
            let q = b / a;
            if dom.contains(&q) {
                q
            } else {
                BigRational::zero()
            }
        }
        Coefficients::Fp { .. } => normalize_entry(dom, &(b / a)),
    }
}

/// Smith normal form `U * A * V = D` with both transforms and their inverses.
/// The diagonal of `D` is canonical: each nonzero entry is the positive
/// generator of its ideal and successive entries divide each other.
pub struct Snf {
    pub d: Mat,
    pub u: Mat,
    pub u_inv: Mat,
    pub v: Mat,
    pub v_inv: Mat,
    pub rank: usize,
    /// The nonzero diagonal as positive integers (1 for unit entries).
    pub diag: Vec<BigInt>,
}

struct SnfWorker<'a> {
    m: Mat,
    u: Mat,
    u_inv: Mat,
    v: Mat,
    v_inv: Mat,
    dom: &'a Coefficients,
}

impl<'a> SnfWorker<'a> {
    fn swap_rows(&mut self, a: usize, b: usize) {
        self.m.swap_rows(a, b);
        self.u.swap_rows(a, b);
        self.u_inv.swap_cols(a, b);
    }

    fn swap_cols(&mut self, a: usize, b: usize) {
        self.m.swap_cols(a, b);
        self.v.swap_cols(a, b);
        self.v_inv.swap_rows(a, b);
    }

    fn add_row(&mut self, i: usize, j: usize, c: &BigRational) {
        self.m.add_row(i, j, c, self.dom);
        self.u.add_row(i, j, c, self.dom);
        let neg = -c.clone();
        self.u_inv.add_col(j, i, &neg, self.dom);
    }

    fn add_col(&mut self, i: usize, j: usize, c: &BigRational) {
        self.m.add_col(i, j, c, self.dom);
        self.v.add_col(i, j, c, self.dom);
        let neg = -c.clone();
        self.v_inv.add_row(j, i, &neg, self.dom);
    }

    fn scale_row(&mut self, i: usize, unit: &BigRational) {
        self.m.scale_row(i, unit, self.dom);
        self.u.scale_row(i, unit, self.dom);
        let inv = BigRational::one() / unit;
        self.u_inv.scale_col(i, &inv, self.dom);
    }

    /// Minimal-core nonzero entry of the submatrix at (k..,k..).
    fn find_pivot(&self, k: usize) -> Option<(usize, usize)> {
        let mut best: Option<(BigInt, usize, usize)> = None;
        for i in k..self.m.rows {
            for j in k..self.m.cols {
                let e = self.m.at(i, j);
                if e.is_zero() {
                    continue;
                }
                let c = self.dom.core(e);
                match &best {
                    Some((bc, _, _)) if *bc <= c => {}
                    _ => best = Some((c, i, j)),
                }
            }
        }
        best.map(|(_, i, j)| (i, j))
    }
}

pub fn snf(a: &Mat, dom: &Coefficients) -> Snf {
    for i in 0..a.rows {
        for j in 0..a.cols {
            assert!(
                dom.contains(a.at(i, j)),
                "entry {} at ({},{}) outside {}",
                a.at(i, j),
                i,
                j,
                dom
            );
        }
    }
    let mut w = SnfWorker {
        m: a.normalized(dom),
        u: Mat::identity(a.rows),
        u_inv: Mat::identity(a.rows),
        v: Mat::identity(a.cols),
        v_inv: Mat::identity(a.cols),
        dom,
    };
    let bound = a.rows.min(a.cols);
    let mut k = 0;
    while k < bound {
        match w.find_pivot(k) {
            None => break,
            Some((pi, pj)) => {
                w.swap_rows(k, pi);
                w.swap_cols(k, pj);
            }
        }
        loop {
            let mut dirty = false;
            for i in k + 1..w.m.rows {
                if w.m.at(i, k).is_zero() {
                    continue;
                }
                let q = euclid_quotient(dom, w.m.at(k, k), w.m.at(i, k));
                if !q.is_zero() {
                    let neg = -q;
                    w.add_row(i, k, &neg);
                }
                if !w.m.at(i, k).is_zero() {
                    dirty = true;
                }
            }
            if dirty {
                let (pi, pj) = w.find_pivot(k).expect("dirty implies nonzero entry");
                w.swap_rows(k, pi);
                w.swap_cols(k, pj);
                continue;
            }
            for j in k + 1..w.m.cols {
                if w.m.at(k, j).is_zero() {
                    continue;
                }
                let q = euclid_quotient(dom, w.m.at(k, k), w.m.at(k, j));
                if !q.is_zero() {
                    let neg = -q;
                    w.add_col(j, k, &neg);
                }
                if !w.m.at(k, j).is_zero() {
                    dirty = true;
                }
            }
            if dirty {
                let (pi, pj) = w.find_pivot(k).expect("dirty implies nonzero entry");
                w.swap_rows(k, pi);
                w.swap_cols(k, pj);
                continue;
            }
            // Enforce the divisibility chain: the pivot must divide every
            // entry of the remaining submatrix.
            let pivot = w.m.at(k, k).clone();
            let mut offender = None;
            'scan: for i in k + 1..w.m.rows {
                for j in k + 1..w.m.cols {
                    let e = w.m.at(i, j);
                    if !e.is_zero() && !dom.contains(&(e / &pivot)) {
                        offender = Some(i);
                        break 'scan;
                    }
                }
            }
            match offender {
                Some(i) => {
                    let one = BigRational::one();
                    w.add_row(k, i, &one);
                }
                None => break,
            }
        }
        k += 1;
    }
    // Canonicalize the diagonal to positive generators.
    let mut diag = Vec::with_capacity(k);
    for i in 0..k {
        let d = w.m.at(i, i).clone();
        let core = dom.core(&d);
        let canon = BigRational::from(core.clone());
        if d != canon {
            let unit = &canon / &d;
            w.scale_row(i, &unit);
        }
        diag.push(core);
    }
    Snf {
        d: w.m,
        u: w.u,
        u_inv: w.u_inv,
        v: w.v,
        v_inv: w.v_inv,
        rank: k,
        diag,
    }
}

/// Basis of the kernel of `a` as a matrix of columns, free over the ring.
pub fn kernel_basis(a: &Mat, dom: &Coefficients) -> Mat {
    let s = snf(a, dom);
    let mut cols = Vec::new();
    for j in s.rank..a.cols {
        cols.push(s.v.col(j));
    }
    Mat::from_cols(a.cols, &cols)
}

/// One solution of `a * x = b` over the ring, if any.
pub fn solve(a: &Mat, b: &[BigRational], dom: &Coefficients) -> Option<Vec<BigRational>> {
    assert_eq!(b.len(), a.rows);
    let s = snf(a, dom);
    let c: Vec<BigRational> = s
        .u
        .mul_vec(b)
        .iter()
        .map(|x| normalize_entry(dom, x))
        .collect();
    let mut y = vec![BigRational::zero(); a.cols];
    for (i, ci) in c.iter().enumerate() {
        if i < s.rank {
            let q = ci / s.d.at(i, i);
            if !dom.contains(&q) {
                return None;
            }
            y[i] = normalize_entry(dom, &q);
        } else if !ci.is_zero() {
            return None;
        }
    }
    Some(
        s.v.mul_vec(&y)
            .iter()
            .map(|x| normalize_entry(dom, x))
            .collect(),
    )
}

/// Rank over the fraction field (or over F_p itself for the field case).
pub fn rank(a: &Mat, dom: &Coefficients) -> usize {
    let mut m = a.normalized(dom);
    let mut r = 0;
    for col in 0..m.cols {
        let mut pivot = None;
        for row in r..m.rows {
            if !m.at(row, col).is_zero() {
                pivot = Some(row);
                break;
            }
        }
        let Some(p) = pivot else { continue };
        m.swap_rows(r, p);
        let inv = BigRational::one() / m.at(r, col);
        m.scale_row(r, &inv, dom);
        for row in r + 1..m.rows {
            let f = m.at(row, col).clone();
            if !f.is_zero() {
                let neg = -f;
                m.add_row(row, r, &neg, dom);
            }
        }
        r += 1;
        if r == m.rows {
            break;
        }
    }
    r
}

/// Column echelon basis of the column span of `a`, with pivot rows strictly
/// increasing, canonical positive pivots, and off-pivot entries reduced.
/// Zero columns are dropped, so the result's columns are a free basis.
pub struct Echelon {
    pub mat: Mat,
    pub pivot_rows: Vec<usize>,
}

pub fn column_span_basis(a: &Mat, dom: &Coefficients) -> Echelon {
    let mut m = a.normalized(dom);
    let mut active: Vec<usize> = (0..m.cols).collect();
    let mut pivots: Vec<(usize, usize)> = Vec::new(); // (row, col)
    for row in 0..m.rows {
        loop {
            let nz: Vec<usize> = active
                .iter()
                .copied()
                .filter(|&c| !m.at(row, c).is_zero())
                .collect();
            if nz.len() <= 1 {
                if let Some(&c) = nz.first() {
                    let canon = BigRational::from(dom.core(m.at(row, c)));
                    if *m.at(row, c) != canon {
                        let unit = &canon / m.at(row, c);
                        m.scale_col(c, &unit, dom);
                    }
                    pivots.push((row, c));
                    active.retain(|&x| x != c);
                }
                break;
            }
            let best = nz
                .iter()
                .copied()
                .min_by_key(|&c| dom.core(m.at(row, c)))
                .unwrap();
            for c in nz {
                if c == best {
                    continue;
                }
                let q = euclid_quotient(dom, m.at(row, best), m.at(row, c));
                if !q.is_zero() {
                    let neg = -q;
                    m.add_col(c, best, &neg, dom);
                }
            }
        }
    }
    // Reduce earlier columns against later pivots for a canonical form.
    for j in 0..pivots.len() {
        let (rj, cj) = pivots[j];
        let piv = m.at(rj, cj).clone();
        for &(_, ci) in pivots.iter().take(j) {
            let e = m.at(rj, ci).clone();
            if e.is_zero() {
                continue;
            }
            let q = euclid_quotient(dom, &piv, &e);
            if !q.is_zero() {
                let neg = -q;
                m.add_col(ci, cj, &neg, dom);
            }
        }
    }
    let cols: Vec<Vec<BigRational>> = pivots.iter().map(|&(_, c)| m.col(c)).collect();
    Echelon {
        mat: Mat::from_cols(m.rows, &cols),
        pivot_rows: pivots.iter().map(|&(r, _)| r).collect(),
    }
}

impl Echelon {
    pub fn rank(&self) -> usize {
        self.pivot_rows.len()
    }

    /// Greedy top-down reduction of `v` against the basis. Returns the
    /// residual and the coefficients used; `v` is in the span over the ring
    /// iff the residual is zero.
    pub fn reduce(
        &self,
        v: &[BigRational],
        dom: &Coefficients,
    ) -> (Vec<BigRational>, Vec<BigRational>) {
        assert_eq!(v.len(), self.mat.rows);
        let mut res: Vec<BigRational> = v.iter().map(|x| normalize_entry(dom, x)).collect();
        let mut coeffs = vec![BigRational::zero(); self.rank()];
        for (j, &r) in self.pivot_rows.iter().enumerate() {
            if res[r].is_zero() {
                continue;
            }
            let piv = self.mat.at(r, j);
            let t = &res[r] / piv;
            let q = if dom.contains(&t) {
                normalize_entry(dom, &t)
            } else {
                euclid_quotient(dom, piv, &res[r])
            };
            if q.is_zero() {
                continue;
            }
            for i in 0..res.len() {
                let w = self.mat.at(i, j);
                if !w.is_zero() {
                    res[i] = normalize_entry(dom, &(&res[i] - &q * w));
                }
            }
            coeffs[j] = q;
        }
        (res, coeffs)
    }

    pub fn contains(&self, v: &[BigRational], dom: &Coefficients) -> bool {
        self.reduce(v, dom).0.iter().all(|x| x.is_zero())
    }
}

/// Isomorphism type of a finitely generated module over the coefficient
/// ring: a free rank plus a multiset of prime-power cyclic orders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct GroupDescriptor {
    pub free: usize,
    /// Sorted list of (prime, exponent) prime-power torsion summands.
    pub torsion: Vec<(u64, u32)>,
}

impl GroupDescriptor {
    pub fn zero() -> GroupDescriptor {
        GroupDescriptor::default()
    }

    pub fn free(rank: usize) -> GroupDescriptor {
        GroupDescriptor {
            free: rank,
            torsion: Vec::new(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.free == 0 && self.torsion.is_empty()
    }

    pub fn direct_sum(&self, other: &GroupDescriptor) -> GroupDescriptor {
        let mut torsion = self.torsion.clone();
        torsion.extend(other.torsion.iter().copied());
        torsion.sort_unstable();
        GroupDescriptor {
            free: self.free + other.free,
            torsion,
        }
    }

    /// Append the prime-power factors of a cyclic order `d >= 2`, keeping
    /// only primes visible over `dom`.
    fn push_cyclic(&mut self, d: &BigInt, dom: &Coefficients) {
        for (p, e) in prime_power_factors(d) {
            if dom.keeps_torsion_prime(p) {
                self.torsion.push((p, e));
            }
        }
    }
}

impl fmt::Display for GroupDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut parts = Vec::new();
        match self.free {
            0 => {}
            1 => parts.push("Z".to_string()),
            k => parts.push(format!("Z^{}", k)),
        }
        for &(p, e) in &self.torsion {
            parts.push(format!("Z/{}", (p as u128).pow(e)));
        }
        write!(f, "{}", parts.join(" + "))
    }
}

/// Cokernel of `a` as a map into the free module of rank `a.rows`.
pub fn cokernel_descriptor(a: &Mat, dom: &Coefficients) -> GroupDescriptor {
    let s = snf(a, dom);
    let mut g = GroupDescriptor {
        free: a.rows - s.rank,
        torsion: Vec::new(),
    };
    for d in &s.diag {
        if !d.is_one() {
            g.push_cyclic(d, dom);
        }
    }
    g.torsion.sort_unstable();
    g
}

/// A subquotient span(Z)/span(B) with chosen generators. Each generator is
/// an ambient vector paired with its cyclic order (`0` for a free summand).
pub struct Subquotient {
    pub descriptor: GroupDescriptor,
    pub gens: Vec<(BigInt, Vec<BigRational>)>,
}

/// Compute span(z)/span(b); the columns of `b` must lie in the span of the
/// columns of `z` over the ring.
pub fn subquotient(z: &Mat, b: &Mat, dom: &Coefficients) -> Result<Subquotient, LinalgError> {
    let w = column_span_basis(z, dom);
    let r = w.rank();
    let mut c = Mat::zero(r, b.cols);
    for j in 0..b.cols {
        let (res, coeffs) = w.reduce(&b.col(j), dom);
        if let Some(row) = res.iter().position(|x| !x.is_zero()) {
            return Err(LinalgError::NotInSpan { row });
        }
        for (i, t) in coeffs.into_iter().enumerate() {
            c.set(i, j, t);
        }
    }
    let s = snf(&c, dom);
    let mut descriptor = GroupDescriptor {
        free: r - s.rank,
        torsion: Vec::new(),
    };
    let mut gens = Vec::new();
    for i in 0..r {
        let order = if i < s.rank {
            s.diag[i].clone()
        } else {
            BigInt::zero()
        };
        if order.is_one() {
            continue;
        }
        if !order.is_zero() {
            let kept = prime_power_factors(&order)
                .into_iter()
                .any(|(p, _)| dom.keeps_torsion_prime(p));
            if !kept {
                continue;
            }
            descriptor.push_cyclic(&order, dom);
        }
        // Generator of the i-th invariant summand, written in the ambient
        // coordinates: W * (column i of U^-1).
        let g = w.mat.mul_vec(&s.u_inv.col(i));
        gens.push((order, g.iter().map(|x| normalize_entry(dom, x)).collect()));
    }
    descriptor.torsion.sort_unstable();
    Ok(Subquotient { descriptor, gens })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(n: i64) -> BigRational {
        BigRational::from(BigInt::from(n))
    }

    fn qr(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn mat(rows: &[&[i64]]) -> Mat {
        Mat::from_rows(
            rows.iter()
                .map(|r| r.iter().map(|&x| q(x)).collect())
                .collect(),
        )
    }

    fn check_snf(a: &Mat, dom: &Coefficients) -> Snf {
        let s = snf(a, dom);
        // U A V = D (up to the domain's canonical representative).
        let prod = s.u.mul(&a.normalized(dom)).mul(&s.v).normalized(dom);
        assert_eq!(prod, s.d, "U*A*V != D");
        // Transforms invert each other.
        assert_eq!(
            s.u.mul(&s.u_inv).normalized(dom),
            Mat::identity(a.rows),
            "U*Uinv != I"
        );
        assert_eq!(
            s.v_inv.mul(&s.v).normalized(dom),
            Mat::identity(a.cols),
            "Vinv*V != I"
        );
        // Diagonal, with a divisibility chain of positive entries.
        for i in 0..a.rows {
            for j in 0..a.cols {
                if i != j {
                    assert!(s.d.at(i, j).is_zero(), "off-diagonal junk");
                }
            }
        }
        for w in s.diag.windows(2) {
            assert!(
                num::Integer::mod_floor(&w[1], &w[0]).is_zero(),
                "divisibility chain broken: {} !| {}",
                w[0],
                w[1]
            );
        }
        s
    }

    #[test]
    fn snf_known_integer_matrices() {
        let a = mat(&[&[2, 0], &[0, 3]]);
        let s = check_snf(&a, &Coefficients::Int);
        assert_eq!(s.diag, vec![BigInt::from(1), BigInt::from(6)]);
        let g = cokernel_descriptor(&a, &Coefficients::Int);
        assert_eq!(g.free, 0);
        assert_eq!(g.torsion, vec![(2, 1), (3, 1)]);

        let a = mat(&[&[12]]);
        let g = cokernel_descriptor(&a, &Coefficients::Int);
        assert_eq!(g.torsion, vec![(2, 2), (3, 1)]);
        assert_eq!(g.to_string(), "Z/4 + Z/3");

        let a = mat(&[&[1728, -1, 1]]);
        let s = check_snf(&a, &Coefficients::Int);
        assert_eq!(s.rank, 1);
        assert_eq!(s.diag, vec![BigInt::from(1)]);
        let k = kernel_basis(&a, &Coefficients::Int);
        assert_eq!(k.cols, 2);
        assert!(a.mul(&k).is_zero());
    }

    #[test]
    fn snf_localized_domains() {
        let a = mat(&[&[12]]);
        let half = Coefficients::Inverted {
            primes: [2].into_iter().collect(),
        };
        let g = cokernel_descriptor(&a, &half);
        assert_eq!(g.torsion, vec![(3, 1)]);
        let z2 = Coefficients::LocalAt { p: 2 };
        let g = cokernel_descriptor(&a, &z2);
        assert_eq!(g.torsion, vec![(2, 2)]);
        check_snf(&a, &half);
        check_snf(&a, &z2);
        // Entries with unit denominators are fine.
        let a = Mat::from_rows(vec![vec![qr(3, 2)], vec![qr(12, 1)]]);
        let s = check_snf(&a, &half);
        assert_eq!(s.diag, vec![BigInt::from(3)]);
    }

    #[test]
    fn snf_prime_field() {
        let f5 = Coefficients::Fp { p: 5 };
        let a = mat(&[&[10, 1], &[0, 2]]);
        let s = check_snf(&a, &f5);
        assert_eq!(s.rank, 1);
        let g = cokernel_descriptor(&a, &f5);
        assert_eq!(g.free, 1);
        assert!(g.torsion.is_empty());
        // 1/3 is a perfectly good scalar mod 5 (inverse of 3 is 2).
        let a = Mat::from_rows(vec![vec![qr(1, 3)]]);
        let s = snf(&a, &f5);
        assert_eq!(s.rank, 1);
    }

    #[test]
    fn solve_and_membership() {
        let a = mat(&[&[2, 0], &[0, 3]]);
        let x = solve(&a, &[q(4), q(9)], &Coefficients::Int).unwrap();
        assert_eq!(x, vec![q(2), q(3)]);
        assert!(solve(&a, &[q(1), q(0)], &Coefficients::Int).is_none());
        let half = Coefficients::Inverted {
            primes: [2].into_iter().collect(),
        };
        let x = solve(&a, &[q(1), q(0)], &half).unwrap();
        assert_eq!(a.mul_vec(&x), vec![q(1), q(0)]);
    }

    #[test]
    fn echelon_membership() {
        // span{e1, 2*e2} in Z^2
        let z = Mat::from_cols(2, &[vec![q(1), q(0)], vec![q(0), q(2)]]);
        let w = column_span_basis(&z, &Coefficients::Int);
        assert_eq!(w.rank(), 2);
        assert!(w.contains(&[q(5), q(-4)], &Coefficients::Int));
        assert!(!w.contains(&[q(0), q(1)], &Coefficients::Int));
    }

    #[test]
    fn subquotient_descriptor() {
        // span{e1, 2e2} / span{4e2} = Z + Z/2
        let z = Mat::from_cols(2, &[vec![q(1), q(0)], vec![q(0), q(2)]]);
        let b = Mat::from_cols(2, &[vec![q(0), q(4)]]);
        let sq = subquotient(&z, &b, &Coefficients::Int).unwrap();
        assert_eq!(sq.descriptor.free, 1);
        assert_eq!(sq.descriptor.torsion, vec![(2, 1)]);
        assert_eq!(sq.descriptor.to_string(), "Z + Z/2");
        // Each torsion generator's order annihilates it into span(B).
        let wb = column_span_basis(&b, &Coefficients::Int);
        for (order, g) in &sq.gens {
            if !order.is_zero() {
                let scaled: Vec<BigRational> =
                    g.iter().map(|x| x * BigRational::from(order.clone())).collect();
                assert!(wb.contains(&scaled, &Coefficients::Int));
            }
        }
        // Boundary outside the cycles is rejected.
        let bad = Mat::from_cols(2, &[vec![q(0), q(1)]]);
        assert!(subquotient(&z, &bad, &Coefficients::Int).is_err());
    }

    #[test]
    fn empty_shapes() {
        let a = Mat::zero(3, 0);
        let g = cokernel_descriptor(&a, &Coefficients::Int);
        assert_eq!(g.free, 3);
        let a = Mat::zero(0, 2);
        let s = snf(&a, &Coefficients::Int);
        assert_eq!(s.rank, 0);
        let k = kernel_basis(&a, &Coefficients::Int);
        assert_eq!(k.cols, 2);
    }

    fn small_matrix() -> impl Strategy<Value = Mat> {
        (1usize..4, 1usize..4).prop_flat_map(|(r, c)| {
            proptest::collection::vec(-6i64..7, r * c).prop_map(move |v| Mat {
                rows: r,
                cols: c,
                data: v.into_iter().map(q).collect(),
            })
        })
    }

    fn domains() -> Vec<Coefficients> {
        vec![
            Coefficients::Int,
            Coefficients::Inverted {
                primes: [2].into_iter().collect(),
            },
            Coefficients::LocalAt { p: 3 },
            Coefficients::Fp { p: 5 },
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn snf_invariants(a in small_matrix()) {
            for dom in domains() {
                let s = check_snf(&a, &dom);
                let k = kernel_basis(&a, &dom);
                prop_assert!(a.mul(&k).normalized(&dom).is_zero());
                // Field rank agrees with SNF rank over fields; over Z the
                // SNF rank equals the rational rank.
                prop_assert_eq!(s.rank, rank(&a, &dom));
            }
        }

        #[test]
        fn solve_roundtrip(a in small_matrix(), xs in proptest::collection::vec(-5i64..6, 4)) {
            for dom in domains() {
                let x: Vec<BigRational> = (0..a.cols).map(|j| q(xs[j])).collect();
                let b = a.mul_vec(&x);
                let sol = solve(&a, &b, &dom).expect("constructed system must be solvable");
                let bb = a.mul_vec(&sol);
                let want: Vec<BigRational> = b.iter().map(|t| normalize_entry(&dom, t)).collect();
                let got: Vec<BigRational> = bb.iter().map(|t| normalize_entry(&dom, t)).collect();
                prop_assert_eq!(got, want);
            }
        }
    }
}
