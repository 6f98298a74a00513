//! Exact sparse Laurent series in q and zeta on the exponent lattice
//! (1/24)Z x (1/2)Z, with valuation-aware precision bookkeeping.
//!
//! Exponents are stored as integers scaled onto the lattice: a term
//! q^{x}zeta^{y} is keyed by (24x, 2y). Each series carries a guaranteed
//! q-precision: every term with q-exponent strictly below it is exact, and
//! no term at or above it is stored. Coefficients are arbitrary-precision
//! rationals.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{Integer, One, Signed, Zero};
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SeriesError {
    #[error("exponent {num}/{den} is not on the lattice (denominator must divide {lattice})")]
    OutOfLattice { num: i64, den: i64, lattice: i64 },
    #[error("division by the zero series")]
    DivisionByZero,
    #[error("division leaves a remainder at q-level {q24}/24")]
    NonExactDivision { q24: i64 },
    #[error("seed is not a root of the q^0-level cubic")]
    SeedNotRoot,
    #[error("q^0 derivative at the seed is zero; level-by-level solving impossible")]
    SingularSeed,
    #[error("malformed series JSON: {0}")]
    BadJson(String),
}

/// Guaranteed q-precision, measured in 24ths of a q-power. `Finite(p)`
/// means all terms with 24*qexp < p are exact; `Infinity` marks an exactly
/// known Laurent polynomial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum QPrec {
    Finite(i64),
    Infinity,
}

impl QPrec {
    pub fn allows(self, q24: i64) -> bool {
        match self {
            QPrec::Finite(p) => q24 < p,
            QPrec::Infinity => true,
        }
    }

    pub fn plus(self, delta: i64) -> QPrec {
        match self {
            QPrec::Finite(p) => QPrec::Finite(p + delta),
            QPrec::Infinity => QPrec::Infinity,
        }
    }
}

impl fmt::Display for QPrec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QPrec::Finite(p) => write!(f, "{}/24", p),
            QPrec::Infinity => write!(f, "infinity"),
        }
    }
}

/// Laurent polynomial in zeta^{1/2}, keyed by doubled exponent.
pub type ZPoly = BTreeMap<i64, BigRational>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QZSeries {
    /// (24 * q-exponent, 2 * zeta-exponent) -> coefficient; no zeros stored.
    terms: BTreeMap<(i64, i64), BigRational>,
    qprec: QPrec,
}

fn zpoly_mul(a: &ZPoly, b: &ZPoly) -> ZPoly {
    let mut out = ZPoly::new();
    for (ea, ca) in a {
        for (eb, cb) in b {
            let e = out.entry(ea + eb).or_insert_with(BigRational::zero);
            *e += ca * cb;
        }
    }
    out.retain(|_, c| !c.is_zero());
    out
}

/// Exact division in Q[zeta^{1/2}, zeta^{-1/2}]; fails when any remainder
/// would be left.
fn zpoly_div_exact(num: &ZPoly, den: &ZPoly) -> Option<ZPoly> {
    if num.is_empty() {
        return Some(ZPoly::new());
    }
    let den_top = *den.keys().next_back().expect("nonzero divisor");
    let den_top_c = den[&den_top].clone();
    let den_min = *den.keys().next().unwrap();
    let num_min = *num.keys().next().unwrap();
    let min_quot_exp = num_min - den_min;
    let mut rem = num.clone();
    let mut quot = ZPoly::new();
    while let Some((&top, _)) = rem.iter().next_back() {
        let e = top - den_top;
        if e < min_quot_exp {
            return None;
        }
        let t = &rem[&top] / &den_top_c;
        for (de, dc) in den {
            let entry = rem.entry(de + e).or_insert_with(BigRational::zero);
            *entry -= &t * dc;
        }
        rem.retain(|_, c| !c.is_zero());
        quot.insert(e, t);
    }
    Some(quot)
}

impl QZSeries {
    pub fn zero(qprec: QPrec) -> QZSeries {
        QZSeries {
            terms: BTreeMap::new(),
            qprec,
        }
    }

    pub fn one() -> QZSeries {
        QZSeries::monomial(0, 0)
    }

    /// Exactly known single term q^{q24/24} zeta^{z2/2}.
    pub fn monomial(q24: i64, z2: i64) -> QZSeries {
        QZSeries::from_terms(vec![(q24, z2, BigRational::one())], QPrec::Infinity)
    }

    pub fn constant(c: BigRational) -> QZSeries {
        QZSeries::from_terms(vec![(0, 0, c)], QPrec::Infinity)
    }

    pub fn from_terms(list: Vec<(i64, i64, BigRational)>, qprec: QPrec) -> QZSeries {
        let mut terms = BTreeMap::new();
        for (q24, z2, c) in list {
            if c.is_zero() || !qprec.allows(q24) {
                continue;
            }
            let e = terms.entry((q24, z2)).or_insert_with(BigRational::zero);
            *e += c;
        }
        terms.retain(|_, c: &mut BigRational| !c.is_zero());
        QZSeries { terms, qprec }
    }

    pub fn qprec(&self) -> QPrec {
        self.qprec
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (i64, i64, &BigRational)> {
        self.terms.iter().map(|(&(q, z), c)| (q, z, c))
    }

    pub fn coefficient(&self, q24: i64, z2: i64) -> BigRational {
        self.terms
            .get(&(q24, z2))
            .cloned()
            .unwrap_or_else(BigRational::zero)
    }

    /// Lowest q-exponent with a nonzero term, in 24ths.
    pub fn q_valuation(&self) -> Option<i64> {
        self.terms.keys().next().map(|&(q, _)| q)
    }

    pub fn q_max(&self) -> Option<i64> {
        self.terms.keys().next_back().map(|&(q, _)| q)
    }

    /// The zeta-Laurent polynomial at a fixed q-level.
    pub fn level(&self, q24: i64) -> ZPoly {
        self.terms
            .range((q24, i64::MIN)..=(q24, i64::MAX))
            .map(|(&(_, z), c)| (z, c.clone()))
            .collect()
    }

    /// Distinct q-levels in the support, ascending.
    pub fn q_levels(&self) -> Vec<i64> {
        let mut out: Vec<i64> = self.terms.keys().map(|&(q, _)| q).collect();
        out.dedup();
        out
    }

    /// Truncate to precision min(current, p24).
    pub fn with_qprec(&self, p24: i64) -> QZSeries {
        let qprec = self.qprec.min(QPrec::Finite(p24));
        QZSeries {
            terms: self
                .terms
                .iter()
                .filter(|(&(q, _), _)| qprec.allows(q))
                .map(|(k, v)| (*k, v.clone()))
                .collect(),
            qprec,
        }
    }

    pub fn add(&self, other: &QZSeries) -> QZSeries {
        let qprec = self.qprec.min(other.qprec);
        let mut terms = BTreeMap::new();
        for (&k, c) in self.terms.iter().chain(other.terms.iter()) {
            if !qprec.allows(k.0) {
                continue;
            }
            let e = terms.entry(k).or_insert_with(BigRational::zero);
            *e += c;
        }
        terms.retain(|_, c: &mut BigRational| !c.is_zero());
        QZSeries { terms, qprec }
    }

    pub fn neg(&self) -> QZSeries {
        QZSeries {
            terms: self.terms.iter().map(|(&k, c)| (k, -c.clone())).collect(),
            qprec: self.qprec,
        }
    }

    pub fn sub(&self, other: &QZSeries) -> QZSeries {
        self.add(&other.neg())
    }

    pub fn scale(&self, c: &BigRational) -> QZSeries {
        if c.is_zero() {
            return QZSeries::zero(self.qprec);
        }
        QZSeries {
            terms: self.terms.iter().map(|(&k, v)| (k, v * c)).collect(),
            qprec: self.qprec,
        }
    }

    /// zeta-exponent r becomes k*r in every term (z substituted by kz).
    pub fn scale_z(&self, k: i64) -> QZSeries {
        assert!(k != 0, "scale_z requires a nonzero integer");
        QZSeries {
            terms: self
                .terms
                .iter()
                .map(|(&(q, z), c)| ((q, z * k), c.clone()))
                .collect(),
            qprec: self.qprec,
        }
    }

    /// Valuation used in the precision rule: the support minimum, or the
    /// precision itself when the series is zero on its window (its true
    /// valuation is then at least that).
    fn val_bound(&self) -> Option<i64> {
        match self.q_valuation() {
            Some(v) => Some(v),
            None => match self.qprec {
                QPrec::Finite(p) => Some(p),
                QPrec::Infinity => None, // exactly zero
            },
        }
    }

    pub fn mul(&self, other: &QZSeries) -> QZSeries {
        let qprec = match (self.qprec, other.qprec, self.val_bound(), other.val_bound()) {
            // An exactly zero factor gives an exactly zero product.
            (_, _, None, _) | (_, _, _, None) => QPrec::Infinity,
            (QPrec::Infinity, QPrec::Infinity, _, _) => QPrec::Infinity,
            (p1, p2, Some(v1), Some(v2)) => p1.plus(v2).min(p2.plus(v1)),
        };
        let mut terms: BTreeMap<(i64, i64), BigRational> = BTreeMap::new();
        for (&(q1, z1), c1) in &self.terms {
            for (&(q2, z2), c2) in &other.terms {
                let q = q1 + q2;
                if !qprec.allows(q) {
                    continue;
                }
                let e = terms.entry((q, z1 + z2)).or_insert_with(BigRational::zero);
                *e += c1 * c2;
            }
        }
        terms.retain(|_, c: &mut BigRational| !c.is_zero());
        QZSeries { terms, qprec }
    }

    pub fn pow(&self, e: u32) -> QZSeries {
        let mut result = QZSeries::one();
        let mut base = self.clone();
        let mut e = e;
        while e > 0 {
            if e & 1 == 1 {
                result = result.mul(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(&base);
            }
        }
        result
    }

    /// Exact quotient num/den as far as both precisions permit, factoring
    /// out the q-valuation of the divisor and dividing level by level with
    /// exact zeta-Laurent division.
    pub fn div_exact(&self, den: &QZSeries) -> Result<QZSeries, SeriesError> {
        let v_den = den.q_valuation().ok_or(SeriesError::DivisionByZero)?;
        let den_levels: Vec<(i64, ZPoly)> = den
            .q_levels()
            .into_iter()
            .map(|q| (q - v_den, den.level(q)))
            .collect();
        let den0 = den_levels[0].1.clone();
        let v_f = match self.q_valuation() {
            Some(v) => v,
            None => {
                // Zero on the window: quotient is zero to the deducible order.
                return Ok(match self.qprec {
                    QPrec::Infinity => QZSeries::zero(QPrec::Infinity),
                    QPrec::Finite(p) => QZSeries::zero(QPrec::Finite(p - v_den)),
                });
            }
        };
        let exact = self.qprec == QPrec::Infinity && den.qprec == QPrec::Infinity;
        // Number of quotient levels obtainable.
        let k_levels: i64 = match (self.qprec, den.qprec) {
            (QPrec::Finite(pf), QPrec::Finite(pg)) => (pf - v_f).min(pg - v_den),
            (QPrec::Infinity, QPrec::Finite(pg)) => pg - v_den,
            (QPrec::Finite(pf), QPrec::Infinity) => pf - v_f,
            (QPrec::Infinity, QPrec::Infinity) => {
                // Polynomial bound: if the quotient exists it spans exactly
                // this many levels (leading terms cannot cancel in a domain).
                let top_f = self.q_max().unwrap();
                let top_g = den.q_max().unwrap();
                ((top_f - top_g) - (v_f - v_den) + 1).max(0)
            }
        };
        let v_h = v_f - v_den;
        let mut h_levels: Vec<ZPoly> = Vec::new();
        for k in 0..k_levels {
            let mut n_k = self.level(v_f + k);
            for (j, g_j) in &den_levels[1..] {
                if *j > k {
                    break;
                }
                let h_prev = &h_levels[(k - j) as usize];
                if h_prev.is_empty() {
                    continue;
                }
                for (e, c) in zpoly_mul(g_j, h_prev) {
                    let entry = n_k.entry(e).or_insert_with(BigRational::zero);
                    *entry -= c;
                }
                n_k.retain(|_, c| !c.is_zero());
            }
            let h_k = zpoly_div_exact(&n_k, &den0)
                .ok_or(SeriesError::NonExactDivision { q24: v_h + k })?;
            h_levels.push(h_k);
        }
        let qprec = if exact {
            QPrec::Infinity
        } else {
            QPrec::Finite(v_h + k_levels)
        };
        let mut list = Vec::new();
        for (k, lvl) in h_levels.into_iter().enumerate() {
            for (z, c) in lvl {
                list.push((v_h + k as i64, z, c));
            }
        }
        let h = QZSeries::from_terms(list, qprec);
        if exact {
            // The level recursion ran to the polynomial bound; certify the
            // quotient by exact multiplication.
            let back = den.mul(&h);
            if back != *self {
                let bad = self.sub(&back);
                return Err(SeriesError::NonExactDivision {
                    q24: bad.q_valuation().unwrap_or(v_f),
                });
            }
        }
        Ok(h)
    }

    /// Taylor coefficients in w (so zeta^r contributes r^k/k! at order k):
    /// entry k of the result is the pure-q series of the w^k coefficient.
    pub fn z_taylor(&self, orders: u32) -> Vec<QZSeries> {
        let mut out = Vec::with_capacity(orders as usize + 1);
        let mut factorial = BigInt::one();
        for k in 0..=orders {
            if k > 0 {
                factorial *= BigInt::from(k);
            }
            let mut list = Vec::new();
            for (&(q, z), c) in &self.terms {
                let r = BigRational::new(BigInt::from(z), BigInt::from(2));
                let rk = num::pow::pow(r, k as usize);
                list.push((q, 0, c * rk / BigRational::from(factorial.clone())));
            }
            out.push(QZSeries::from_terms(list, self.qprec));
        }
        out
    }

    /// Agreement on the common guaranteed window (used by property tests).
    pub fn agrees_with(&self, other: &QZSeries) -> bool {
        let p = self.qprec.min(other.qprec);
        let cut = |s: &QZSeries| -> BTreeMap<(i64, i64), BigRational> {
            s.terms
                .iter()
                .filter(|(&(q, _), _)| p.allows(q))
                .map(|(k, v)| (*k, v.clone()))
                .collect()
        };
        cut(self) == cut(other)
    }

    pub fn to_json(&self) -> Value {
        fn reduced(num: i64, den: i64) -> (i64, i64) {
            if num == 0 {
                return (0, 1);
            }
            let g = num.abs().gcd(&den);
            (num / g, den / g)
        }
        let terms: Vec<Value> = self
            .terms
            .iter()
            .map(|(&(q24, z2), c)| {
                let (qn, qd) = reduced(q24, 24);
                let (zn, zd) = reduced(z2, 2);
                json!([qn, qd, zn, zd, c.numer().to_string(), c.denom().to_string()])
            })
            .collect();
        let qprec = match self.qprec {
            QPrec::Infinity => json!("infinity"),
            QPrec::Finite(p) => {
                let (n, d) = reduced(p, 24);
                json!([n, d])
            }
        };
        json!({ "qprec": qprec, "terms": terms })
    }

    pub fn from_json(v: &Value) -> Result<QZSeries, SeriesError> {
        let bad = |m: &str| SeriesError::BadJson(m.to_string());
        let obj = v.as_object().ok_or_else(|| bad("expected object"))?;
        let qprec = match obj.get("qprec") {
            Some(Value::String(s)) if s == "infinity" => QPrec::Infinity,
            Some(Value::Array(a)) if a.len() == 2 => {
                let n = a[0].as_i64().ok_or_else(|| bad("qprec numerator"))?;
                let d = a[1].as_i64().ok_or_else(|| bad("qprec denominator"))?;
                if d <= 0 || 24 % d != 0 {
                    return Err(SeriesError::OutOfLattice {
                        num: n,
                        den: d,
                        lattice: 24,
                    });
                }
                QPrec::Finite(n * (24 / d))
            }
            _ => return Err(bad("missing or malformed qprec")),
        };
        let mut list = Vec::new();
        for rec in obj
            .get("terms")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("missing terms array"))?
        {
            let r = rec.as_array().ok_or_else(|| bad("term record"))?;
            if r.len() != 6 {
                return Err(bad("term record must have 6 entries"));
            }
            let qn = r[0].as_i64().ok_or_else(|| bad("qexp numerator"))?;
            let qd = r[1].as_i64().ok_or_else(|| bad("qexp denominator"))?;
            let zn = r[2].as_i64().ok_or_else(|| bad("zexp numerator"))?;
            let zd = r[3].as_i64().ok_or_else(|| bad("zexp denominator"))?;
            if qd <= 0 || 24 % qd != 0 {
                return Err(SeriesError::OutOfLattice {
                    num: qn,
                    den: qd,
                    lattice: 24,
                });
            }
            if zd <= 0 || 2 % zd != 0 {
                return Err(SeriesError::OutOfLattice {
                    num: zn,
                    den: zd,
                    lattice: 2,
                });
            }
            let cn: BigInt = r[4]
                .as_str()
                .ok_or_else(|| bad("coefficient numerator"))?
                .parse()
                .map_err(|_| bad("coefficient numerator parse"))?;
            let cd: BigInt = r[5]
                .as_str()
                .ok_or_else(|| bad("coefficient denominator"))?
                .parse()
                .map_err(|_| bad("coefficient denominator parse"))?;
            if cd.is_zero() {
                return Err(bad("zero coefficient denominator"));
            }
            list.push((qn * (24 / qd), zn * (2 / zd), BigRational::new(cn, cd)));
        }
        Ok(QZSeries::from_terms(list, qprec))
    }

    /// Solve b^3 + c2 b^2 + c1 b + c0 = 0 level by level in q, starting
    /// from the exact q^0-level root `seed` (a zeta-Laurent polynomial).
    pub fn triangular_cubic_solve(
        c2: &QZSeries,
        c1: &QZSeries,
        c0: &QZSeries,
        seed: &QZSeries,
    ) -> Result<QZSeries, SeriesError> {
        assert!(
            seed.terms.keys().all(|&(q, _)| q == 0),
            "seed must be concentrated at q^0"
        );
        for s in [c2, c1, c0] {
            assert!(
                s.q_valuation().map_or(true, |v| v >= 0),
                "cubic coefficients must have nonnegative q-valuation"
            );
        }
        let target = c2.qprec.min(c1.qprec).min(c0.qprec);
        let (levels, verify_exact) = match target {
            QPrec::Finite(p) => (p.max(0), false),
            QPrec::Infinity => {
                // Heuristic level bound for the all-polynomial case; the
                // residual is certified exactly zero afterwards.
                let m = [c2, c1, c0, seed]
                    .iter()
                    .filter_map(|s| s.q_max())
                    .max()
                    .unwrap_or(0);
                (3 * m + 48, true)
            }
        };
        let mut b = match target {
            QPrec::Finite(p) => seed.with_qprec(p),
            QPrec::Infinity => seed.clone(),
        };
        let mut b2 = b.mul(&b);
        // Residual of the cubic at the current partial solution.
        let mut r = b2.mul(&b).add(&c2.mul(&b2)).add(&c1.mul(&b)).add(c0);
        if !r.level(0).is_empty() {
            return Err(SeriesError::SeedNotRoot);
        }
        // q^0 level of the derivative 3b^2 + 2 c2 b + c1.
        let mut d0 = ZPoly::new();
        let three = BigRational::from(BigInt::from(3));
        let two = BigRational::from(BigInt::from(2));
        for (z, c) in b2.level(0) {
            *d0.entry(z).or_insert_with(BigRational::zero) += &three * c;
        }
        for (z, c) in zpoly_mul(&c2.level(0), &b.level(0)) {
            *d0.entry(z).or_insert_with(BigRational::zero) += &two * c;
        }
        for (z, c) in c1.level(0) {
            *d0.entry(z).or_insert_with(BigRational::zero) += c;
        }
        d0.retain(|_, c| !c.is_zero());
        for k in 1..=levels {
            let n_k = r.level(k);
            if n_k.is_empty() {
                continue;
            }
            if d0.is_empty() {
                return Err(SeriesError::SingularSeed);
            }
            let quo =
                zpoly_div_exact(&n_k, &d0).ok_or(SeriesError::NonExactDivision { q24: k })?;
            let delta = QZSeries::from_terms(
                quo.into_iter().map(|(z, c)| (k, z, -c)).collect(),
                b.qprec,
            );
            // cubic(b + delta) - cubic(b)
            //   = (3b^2 + 2 c2 b + c1) delta + (3b + c2) delta^2 + delta^3
            let d2 = delta.mul(&delta);
            let lin = b2
                .scale(&three)
                .add(&c2.mul(&b).scale(&two))
                .add(c1)
                .mul(&delta);
            let quad = b.scale(&three).add(c2).mul(&d2);
            r = r.add(&lin).add(&quad).add(&d2.mul(&delta));
            b2 = b2.add(&b.mul(&delta).scale(&two)).add(&d2);
            b = b.add(&delta);
        }
        if verify_exact && !r.is_zero() {
            return Err(SeriesError::NonExactDivision {
                q24: r.q_valuation().unwrap(),
            });
        }
        Ok(b)
    }
}

impl fmt::Display for QZSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            write!(f, "0")?;
        } else {
            let mut first = true;
            for (&(q24, z2), c) in &self.terms {
                if first {
                    if c.is_negative() {
                        write!(f, "-")?;
                    }
                    first = false;
                } else if c.is_negative() {
                    write!(f, " - ")?;
                } else {
                    write!(f, " + ")?;
                }
                let abs = c.abs();
                let mut factors = Vec::new();
                if q24 != 0 {
                    if q24 % 24 == 0 {
                        factors.push(format!("q^{}", q24 / 24));
                    } else {
                        factors.push(format!("q^({}/24)", q24));
                    }
                }
                if z2 != 0 {
                    if z2 % 2 == 0 {
                        factors.push(format!("zeta^{}", z2 / 2));
                    } else {
                        factors.push(format!("zeta^({}/2)", z2));
                    }
                }
                if factors.is_empty() {
                    write!(f, "{}", abs)?;
                } else if abs.is_one() {
                    write!(f, "{}", factors.join("*"))?;
                } else {
                    write!(f, "{}*{}", abs, factors.join("*"))?;
                }
            }
        }
        write!(f, " + O(q^{})", self.qprec)
    }
}

impl std::ops::Add for &QZSeries {
    type Output = QZSeries;
    fn add(self, rhs: &QZSeries) -> QZSeries {
        QZSeries::add(self, rhs)
    }
}

impl std::ops::Sub for &QZSeries {
    type Output = QZSeries;
    fn sub(self, rhs: &QZSeries) -> QZSeries {
        QZSeries::sub(self, rhs)
    }
}

impl std::ops::Mul for &QZSeries {
    type Output = QZSeries;
    fn mul(self, rhs: &QZSeries) -> QZSeries {
        QZSeries::mul(self, rhs)
    }
}

impl std::ops::Neg for &QZSeries {
    type Output = QZSeries;
    fn neg(self) -> QZSeries {
        QZSeries::neg(self)
    }
}
