//! Exact positive rationals with arbitrary precision, plus prime factorization
//! into exponent form.
//!
//! Every scalar in the crate (weights, masses, edge weights, eigenvalues) is a
//! [`PosRat`]: a reduced fraction that is strictly positive by construction.
//! [`FactoredRat`] is the prime-exponent view used by the lattice code.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Div, Mul};
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A strictly positive rational number in lowest terms.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PosRat(BigRational);

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum RatError {
    #[error("rational must be strictly positive, got {0}")]
    NotPositive(String),
    #[error("malformed rational literal {0:?}")]
    Malformed(String),
}

impl PosRat {
    pub fn new(numer: BigInt, denom: BigInt) -> Result<Self, RatError> {
        if denom.is_zero() {
            return Err(RatError::Malformed(format!("{}/0", numer)));
        }
        let r = BigRational::new(numer, denom);
        Self::from_ratio(r)
    }

    pub fn from_ratio(r: BigRational) -> Result<Self, RatError> {
        if r.is_positive() {
            Ok(PosRat(r))
        } else {
            Err(RatError::NotPositive(r.to_string()))
        }
    }

    /// Convenience constructor for small literals. Panics on zero arguments.
    pub fn of(numer: u64, denom: u64) -> Self {
        PosRat::new(BigInt::from(numer), BigInt::from(denom)).expect("PosRat::of, positive literal")
    }

    pub fn one() -> Self {
        PosRat(BigRational::one())
    }

    pub fn is_one(&self) -> bool {
        self.0.is_one()
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn as_ratio(&self) -> &BigRational {
        &self.0
    }

    pub fn into_ratio(self) -> BigRational {
        self.0
    }

    pub fn recip(&self) -> PosRat {
        PosRat(self.0.recip())
    }

    /// `self - rhs` when the difference is still positive.
    pub fn checked_sub(&self, rhs: &PosRat) -> Option<PosRat> {
        let d = &self.0 - &rhs.0;
        d.is_positive().then(|| PosRat(d))
    }

    /// `1 - self` when positive, i.e. when `self < 1`.
    pub fn one_minus(&self) -> Option<PosRat> {
        PosRat::one().checked_sub(self)
    }

    pub fn pow(&self, exp: i64) -> PosRat {
        if exp == 0 {
            return PosRat::one();
        }
        let mag = exp.unsigned_abs() as u32;
        let p = PosRat(self.0.pow(mag as i32));
        if exp < 0 {
            p.recip()
        } else {
            p
        }
    }

    pub fn sum<'a>(iter: impl IntoIterator<Item = &'a PosRat>) -> BigRational {
        iter.into_iter()
            .fold(BigRational::zero(), |acc, x| acc + &x.0)
    }
}

impl Add for &PosRat {
    type Output = PosRat;
    fn add(self, rhs: &PosRat) -> PosRat {
        PosRat(&self.0 + &rhs.0)
    }
}

impl Mul for &PosRat {
    type Output = PosRat;
    fn mul(self, rhs: &PosRat) -> PosRat {
        PosRat(&self.0 * &rhs.0)
    }
}

impl Div for &PosRat {
    type Output = PosRat;
    fn div(self, rhs: &PosRat) -> PosRat {
        PosRat(&self.0 / &rhs.0)
    }
}

impl fmt::Display for PosRat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.denom().is_one() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl fmt::Debug for PosRat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for PosRat {
    type Err = RatError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (n, d) = match s.split_once('/') {
            Some((n, d)) => (n, d),
            None => (s, "1"),
        };
        let numer = BigInt::from_str(n.trim()).map_err(|_| RatError::Malformed(s.into()))?;
        let denom = BigInt::from_str(d.trim()).map_err(|_| RatError::Malformed(s.into()))?;
        PosRat::new(numer, denom)
    }
}

impl Serialize for PosRat {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for PosRat {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Prime-exponent form of a positive rational: the finite map
/// `p -> e` with `q = prod p^e` and every exponent nonzero.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FactoredRat {
    exponents: BTreeMap<BigUint, i64>,
}

impl FactoredRat {
    pub fn exponents(&self) -> &BTreeMap<BigUint, i64> {
        &self.exponents
    }

    pub fn primes(&self) -> impl Iterator<Item = &BigUint> {
        self.exponents.keys()
    }

    /// Multiplies the factorization back out.
    pub fn reconstruct(&self) -> PosRat {
        let mut numer = BigUint::one();
        let mut denom = BigUint::one();
        for (p, &e) in &self.exponents {
            let pw = pow_biguint(p, e.unsigned_abs());
            if e > 0 {
                numer *= pw;
            } else {
                denom *= pw;
            }
        }
        PosRat::new(BigInt::from(numer), BigInt::from(denom)).expect("product of primes")
    }
}

/// Exact prime factorization of a positive rational: the factorization of the
/// numerator minus that of the denominator.
pub fn factor(q: &PosRat) -> FactoredRat {
    let mut exponents: BTreeMap<BigUint, i64> = BTreeMap::new();
    let numer = q.numer().magnitude().clone();
    let denom = q.denom().magnitude().clone();
    for (p, e) in factor_biguint(numer) {
        *exponents.entry(p).or_insert(0) += e as i64;
    }
    for (p, e) in factor_biguint(denom) {
        *exponents.entry(p).or_insert(0) -= e as i64;
    }
    exponents.retain(|_, e| *e != 0);
    FactoredRat { exponents }
}

pub fn pow_biguint(base: &BigUint, exp: u64) -> BigUint {
    let mut acc = BigUint::one();
    let mut base = base.clone();
    let mut e = exp;
    while e > 0 {
        if e & 1 == 1 {
            acc = &acc * &base;
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    acc
}

/// Complete factorization of a positive integer.
///
/// Strips small primes by trial division, then finishes machine-word-sized
/// cofactors with Pollard rho. Cofactors beyond `u64` fall back to plain trial
/// division, which is exact but slow for large prime factors.
fn factor_biguint(mut n: BigUint) -> BTreeMap<BigUint, u64> {
    let mut out = BTreeMap::new();
    if n.is_zero() || n.is_one() {
        return out;
    }
    let mut d: u64 = 2;
    while d <= 100_000 {
        let dd = BigUint::from(d);
        if (&dd * &dd) > n {
            break;
        }
        while (&n % &dd).is_zero() {
            n /= &dd;
            *out.entry(dd.clone()).or_insert(0) += 1;
        }
        d = if d == 2 { 3 } else { d + 2 };
    }
    if n.is_one() {
        return out;
    }
    if let Some(n64) = n.to_u64() {
        factor_u64(n64, &mut out);
        return out;
    }
    // Remaining cofactor exceeds u64 and has no factor below 1e5.
    let dd_start = d | 1;
    let mut dd = BigUint::from(dd_start);
    let two = BigUint::from(2u32);
    while (&dd * &dd) <= n {
        while (&n % &dd).is_zero() {
            n /= &dd;
            *out.entry(dd.clone()).or_insert(0) += 1;
        }
        dd += &two;
    }
    if !n.is_one() {
        *out.entry(n).or_insert(0) += 1;
    }
    out
}

fn factor_u64(n: u64, out: &mut BTreeMap<BigUint, u64>) {
    if n <= 1 {
        return;
    }
    if is_prime_u64(n) {
        *out.entry(BigUint::from(n)).or_insert(0) += 1;
        return;
    }
    let d = pollard_rho(n);
    factor_u64(d, out);
    factor_u64(n / d, out);
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc: u64 = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin for u64.
fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n % p == 0 {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0u32;
    while d & 1 == 0 {
        d >>= 1;
        s += 1;
    }
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Brent-cycle Pollard rho; `n` must be composite and odd.
fn pollard_rho(n: u64) -> u64 {
    if n % 2 == 0 {
        return 2;
    }
    let mut c: u64 = 1;
    loop {
        let f = |x: u64| (mul_mod(x, x, n) + c) % n;
        let mut x: u64 = 2;
        let mut y: u64 = 2;
        let mut d: u64 = 1;
        while d == 1 {
            x = f(x);
            y = f(f(y));
            d = gcd_u64(x.abs_diff(y), n);
        }
        if d != n {
            return d;
        }
        c += 1;
    }
}

fn gcd_u64(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fr(pairs: &[(u64, i64)]) -> BTreeMap<BigUint, i64> {
        pairs.iter().map(|&(p, e)| (BigUint::from(p), e)).collect()
    }

    #[test]
    fn factor_one_is_empty() {
        assert!(factor(&PosRat::one()).exponents().is_empty());
    }

    #[test]
    fn factor_twelve_fifths() {
        let q = PosRat::of(12, 5);
        assert_eq!(factor(&q).exponents(), &fr(&[(2, 2), (3, 1), (5, -1)]));
    }

    #[test]
    fn factor_nine_fourths() {
        let q = PosRat::of(9, 4);
        assert_eq!(factor(&q).exponents(), &fr(&[(2, -2), (3, 2)]));
    }

    #[test]
    fn factor_round_trip() {
        for (n, d) in [(1, 1), (12, 5), (9, 4), (1000, 729), (7919, 7907), (360, 77)] {
            let q = PosRat::of(n, d);
            assert_eq!(factor(&q).reconstruct(), q);
        }
    }

    #[test]
    fn rejects_non_positive() {
        assert!(PosRat::new(BigInt::from(0), BigInt::from(1)).is_err());
        assert!(PosRat::new(BigInt::from(-3), BigInt::from(5)).is_err());
        assert!("0/7".parse::<PosRat>().is_err());
        assert!("-2".parse::<PosRat>().is_err());
    }

    #[test]
    fn display_and_parse() {
        assert_eq!(PosRat::of(3, 1).to_string(), "3");
        assert_eq!(PosRat::of(10, 15).to_string(), "2/3");
        assert_eq!("2/3".parse::<PosRat>().unwrap(), PosRat::of(2, 3));
        assert_eq!("4".parse::<PosRat>().unwrap(), PosRat::of(4, 1));
    }

    #[test]
    fn checked_sub_and_one_minus() {
        let a = PosRat::of(3, 4);
        assert_eq!(a.one_minus(), Some(PosRat::of(1, 4)));
        assert_eq!(PosRat::one().one_minus(), None);
        assert_eq!(a.checked_sub(&PosRat::of(3, 4)), None);
        assert_eq!(a.checked_sub(&PosRat::of(1, 2)), Some(PosRat::of(1, 4)));
    }

    #[test]
    fn pollard_factors_semiprime() {
        let q = PosRat::new(BigInt::from(1_000_003u64 * 1_000_033u64), BigInt::one()).unwrap();
        let f = factor(&q);
        assert_eq!(
            f.exponents(),
            &fr(&[(1_000_003, 1), (1_000_033, 1)])
        );
        assert_eq!(f.reconstruct(), q);
    }
}
