//! Coefficient rings for graded-module bookkeeping.
//!
//! Every module in the workbench does its linear algebra over one of four
//! coefficient rings: the integers, the integers with a finite set of primes
//! inverted, the integers localized at a single prime, or a prime field.
//! All of these are principal ideal domains (or fields), which is what makes
//! Smith normal form work uniformly; elements are represented as exact
//! rationals whose denominators must be units of the ring.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Coefficients {
    /// The integers.
    Int,
    /// Integers with every prime in `primes` inverted, e.g. `{2}` gives Z[1/2].
    Inverted { primes: BTreeSet<u64> },
    /// Integers localized at `p`: denominators prime to `p` are units.
    LocalAt { p: u64 },
    /// The prime field with `p` elements.
    Fp { p: u64 },
}

impl fmt::Display for Coefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficients::Int => write!(f, "Z"),
            Coefficients::Inverted { primes } => {
                let list: Vec<String> = primes.iter().map(|p| p.to_string()).collect();
                write!(f, "Z[1/{}]", list.join(",1/"))
            }
            Coefficients::LocalAt { p } => write!(f, "Z_({})", p),
            Coefficients::Fp { p } => write!(f, "F_{}", p),
        }
    }
}

pub fn v_p(mut n: BigInt, p: u64) -> (u32, BigInt) {
    // p-adic valuation and cofactor of a nonzero integer.
    assert!(!n.is_zero());
    let bp = BigInt::from(p);
    let mut v = 0;
    loop {
        let (q, r) = num::Integer::div_rem(&n, &bp);
        if r.is_zero() {
            v += 1;
            n = q;
        } else {
            return (v, n);
        }
    }
}

impl Coefficients {
    pub fn is_field(&self) -> bool {
        matches!(self, Coefficients::Fp { .. })
    }

    pub fn field_char(&self) -> Option<u64> {
        match self {
            Coefficients::Fp { p } => Some(*p),
            _ => None,
        }
    }

    /// Is the (nonzero) rational `x` a unit of this ring?
    pub fn is_unit(&self, x: &BigRational) -> bool {
        assert!(!x.is_zero());
        match self {
            Coefficients::Int => x.numer().abs().is_one() && x.denom().is_one(),
            Coefficients::Inverted { primes } => {
                let mut n = x.numer().abs() * x.denom().abs();
                for &p in primes {
                    n = v_p(n, p).1;
                }
                n.is_one()
            }
            Coefficients::LocalAt { p } => {
                v_p(x.numer().abs(), *p).0 == v_p(x.denom().abs(), *p).0
            }
            Coefficients::Fp { p } => {
                let bp = BigInt::from(*p);
                !num::Integer::mod_floor(x.numer(), &bp).is_zero()
                    || num::Integer::mod_floor(x.denom(), &bp).is_zero()
            }
        }
    }

    /// Does the rational `x` belong to this ring at all?
    pub fn contains(&self, x: &BigRational) -> bool {
        if x.is_zero() {
            return true;
        }
        match self {
            Coefficients::Int => x.denom().is_one(),
            Coefficients::Inverted { primes } => {
                let mut d = x.denom().abs();
                for &p in primes {
                    d = v_p(d, p).1;
                }
                d.is_one()
            }
            Coefficients::LocalAt { p } => v_p(x.denom().abs(), *p).0 == 0,
            Coefficients::Fp { p } => v_p(x.denom().abs(), *p).0 == 0,
        }
    }

    /// Size measure used by the Euclidean steps of Smith reduction: the
    /// positive generator of the ideal (x), as an integer. Units map to 1.
    pub fn core(&self, x: &BigRational) -> BigInt {
        assert!(!x.is_zero(), "core of zero");
        match self {
            Coefficients::Int => {
                assert!(x.denom().is_one());
                x.numer().abs()
            }
            Coefficients::Inverted { primes } => {
                let mut n = x.numer().abs();
                for &p in primes {
                    n = v_p(n, p).1;
                }
                n
            }
            Coefficients::LocalAt { p } => {
                let vn = v_p(x.numer().abs(), *p).0;
                let vd = v_p(x.denom().abs(), *p).0;
                assert!(vn >= vd, "element not in Z_({})", p);
                BigInt::from(*p).pow(vn - vd)
            }
            Coefficients::Fp { .. } => BigInt::one(),
        }
    }

    /// Keep only the torsion visible over this ring: the prime-power `q`
    /// survives iff its prime is not invertible.
    pub fn keeps_torsion_prime(&self, prime: u64) -> bool {
        match self {
            Coefficients::Int => true,
            Coefficients::Inverted { primes } => !primes.contains(&prime),
            Coefficients::LocalAt { p } => prime == *p,
            Coefficients::Fp { p } => prime == *p,
        }
    }
}

/// Factor `n > 1` into prime powers by trial division (orders arising as
/// Smith invariants here are small).
pub fn prime_power_factors(n: &BigInt) -> Vec<(u64, u32)> {
    let mut n = n.abs();
    assert!(n > BigInt::one());
    let mut out = Vec::new();
    let mut p = BigInt::from(2u32);
    while &p * &p <= n {
        let mut e = 0u32;
        loop {
            let (q, r) = num::Integer::div_rem(&n, &p);
            if r.is_zero() {
                n = q;
                e += 1;
            } else {
                break;
            }
        }
        if e > 0 {
            out.push((u64::try_from(&p).expect("prime too large"), e));
        }
        p += 1;
    }
    if n > BigInt::one() {
        out.push((u64::try_from(&n).expect("prime too large"), 1));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use num::FromPrimitive;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn unit_detection() {
        let z = Coefficients::Int;
        assert!(z.is_unit(&q(-1, 1)));
        assert!(!z.is_unit(&q(2, 1)));
        let half = Coefficients::Inverted {
            primes: [2].into_iter().collect(),
        };
        assert!(half.is_unit(&q(4, 1)));
        assert!(half.is_unit(&q(1, 8)));
        assert!(!half.is_unit(&q(3, 2)));
        assert!(half.contains(&q(3, 2)));
        assert!(!half.contains(&q(1, 3)));
        let z2 = Coefficients::LocalAt { p: 2 };
        assert!(z2.is_unit(&q(3, 5)));
        assert!(!z2.is_unit(&q(2, 1)));
        assert!(z2.contains(&q(2, 3)));
        assert!(!z2.contains(&q(1, 2)));
    }

    #[test]
    fn cores() {
        let half = Coefficients::Inverted {
            primes: [2].into_iter().collect(),
        };
        assert_eq!(half.core(&q(12, 1)), BigInt::from_i64(3).unwrap());
        let z3 = Coefficients::LocalAt { p: 3 };
        assert_eq!(z3.core(&q(18, 5)), BigInt::from_i64(9).unwrap());
    }

    #[test]
    fn factoring() {
        assert_eq!(
            prime_power_factors(&BigInt::from(12)),
            vec![(2u64, 2u32), (3, 1)]
        );
        assert_eq!(prime_power_factors(&BigInt::from(97)), vec![(97u64, 1u32)]);
    }
}
