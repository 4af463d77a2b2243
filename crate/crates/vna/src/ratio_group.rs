//! Finitely generated multiplicative subgroups of the positive rationals,
//! represented as integer exponent lattices in row Hermite normal form.
//!
//! The canonical form makes group equality a structural comparison: two
//! groups are equal as subgroups of the rationals exactly when their prime
//! lists and basis matrices coincide field-wise.

use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::rat::{factor, pow_biguint, PosRat};

/// A multiplicative subgroup of the positive rationals.
///
/// `primes` is the ascending list of primes supporting the group and `basis`
/// the unique row Hermite normal form of the exponent lattice over those
/// primes. The trivial group has no primes and no basis rows. No column of
/// the basis is identically zero.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct RatioGroup {
    primes: Vec<BigUint>,
    basis: Vec<Vec<BigInt>>,
}

/// Cyclicity classification of a [`RatioGroup`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GroupKind {
    Trivial,
    /// Rank one; the generator is reported in the open interval (0, 1).
    Cyclic(PosRat),
    HigherRank,
}

impl RatioGroup {
    pub fn trivial() -> Self {
        RatioGroup {
            primes: Vec::new(),
            basis: Vec::new(),
        }
    }

    /// The canonical group generated by the given rationals. Generators equal
    /// to 1 are discarded.
    pub fn generate(gens: &[PosRat]) -> Self {
        let factored: Vec<_> = gens
            .iter()
            .filter(|g| !g.is_one())
            .map(factor)
            .collect();
        let mut primes: Vec<BigUint> = factored
            .iter()
            .flat_map(|f| f.primes().cloned())
            .collect();
        primes.sort();
        primes.dedup();
        let rows = factored
            .iter()
            .map(|f| {
                primes
                    .iter()
                    .map(|p| BigInt::from(f.exponents().get(p).copied().unwrap_or(0)))
                    .collect()
            })
            .collect();
        Self::from_rows(primes, rows)
    }

    pub fn cyclic(g: &PosRat) -> Self {
        Self::generate(std::slice::from_ref(g))
    }

    fn from_rows(primes: Vec<BigUint>, rows: Vec<Vec<BigInt>>) -> Self {
        let basis = hermite_normal_form(rows);
        // A prime whose column became all-zero no longer supports the group.
        let ncols = primes.len();
        let mut used = vec![false; ncols];
        for row in &basis {
            for (j, e) in row.iter().enumerate() {
                if !e.is_zero() {
                    used[j] = true;
                }
            }
        }
        if used.iter().all(|u| *u) {
            return RatioGroup { primes, basis };
        }
        let keep: Vec<usize> = (0..ncols).filter(|&j| used[j]).collect();
        let primes = keep.iter().map(|&j| primes[j].clone()).collect();
        let basis = basis
            .into_iter()
            .map(|row| keep.iter().map(|&j| row[j].clone()).collect())
            .collect();
        RatioGroup { primes, basis }
    }

    /// The group generated by the union of two groups. Commutative,
    /// associative, idempotent, with the trivial group as neutral element.
    pub fn join(&self, other: &RatioGroup) -> RatioGroup {
        if self.is_trivial() {
            return other.clone();
        }
        if other.is_trivial() {
            return self.clone();
        }
        let mut primes: Vec<BigUint> = self
            .primes
            .iter()
            .chain(other.primes.iter())
            .cloned()
            .collect();
        primes.sort();
        primes.dedup();
        let expand = |g: &RatioGroup| -> Vec<Vec<BigInt>> {
            let idx: Vec<usize> = g
                .primes
                .iter()
                .map(|p| primes.binary_search(p).expect("merged prime list"))
                .collect();
            g.basis
                .iter()
                .map(|row| {
                    let mut v = vec![BigInt::zero(); primes.len()];
                    for (j, e) in row.iter().enumerate() {
                        v[idx[j]] = e.clone();
                    }
                    v
                })
                .collect()
        };
        let mut rows = expand(self);
        rows.extend(expand(other));
        Self::from_rows(primes, rows)
    }

    /// Whether `q` lies in the group, i.e. whether its exponent vector is an
    /// integer combination of the basis rows.
    pub fn contains(&self, q: &PosRat) -> bool {
        if q.is_one() {
            return true;
        }
        let f = factor(q);
        let mut v: Vec<BigInt> = match f
            .exponents()
            .iter()
            .map(|(p, &e)| self.primes.binary_search(p).map(|j| (j, e)).ok())
            .collect::<Option<Vec<_>>>()
        {
            Some(pairs) => {
                let mut v = vec![BigInt::zero(); self.primes.len()];
                for (j, e) in pairs {
                    v[j] = BigInt::from(e);
                }
                v
            }
            // Some prime of q does not support the group.
            None => return false,
        };
        for row in &self.basis {
            let p = pivot_col(row).expect("basis rows are nonzero");
            if v[..p].iter().any(|e| !e.is_zero()) {
                return false;
            }
            let (quot, rem) = v[p].div_rem(&row[p]);
            if !rem.is_zero() {
                return false;
            }
            if !quot.is_zero() {
                for (ve, re) in v.iter_mut().zip(row) {
                    *ve -= &quot * re;
                }
            }
        }
        v.iter().all(|e| e.is_zero())
    }

    /// Whether every element of `sub` lies in `self`.
    pub fn contains_group(&self, sub: &RatioGroup) -> bool {
        sub.generators().iter().all(|g| self.contains(g))
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn is_trivial(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn kind(&self) -> GroupKind {
        match self.basis.len() {
            0 => GroupKind::Trivial,
            1 => {
                let g = self.row_value(&self.basis[0]);
                let lambda = if g.as_ratio() > PosRat::one().as_ratio() {
                    g.recip()
                } else {
                    g
                };
                GroupKind::Cyclic(lambda)
            }
            _ => GroupKind::HigherRank,
        }
    }

    /// Canonical generator list: one rational per basis row, folded into the
    /// open interval (0, 1) and sorted ascending.
    pub fn generators(&self) -> Vec<PosRat> {
        let mut gens: Vec<PosRat> = self
            .basis
            .iter()
            .map(|row| {
                let g = self.row_value(row);
                if g.as_ratio() > PosRat::one().as_ratio() {
                    g.recip()
                } else {
                    g
                }
            })
            .collect();
        gens.sort();
        gens
    }

    fn row_value(&self, row: &[BigInt]) -> PosRat {
        let mut numer = BigUint::one();
        let mut denom = BigUint::one();
        for (p, e) in self.primes.iter().zip(row) {
            if e.is_zero() {
                continue;
            }
            let mag = e
                .magnitude()
                .to_u64()
                .expect("lattice exponents fit in u64");
            let pw = pow_biguint(p, mag);
            if e.is_positive() {
                numer *= pw;
            } else {
                denom *= pw;
            }
        }
        PosRat::new(BigInt::from(numer), BigInt::from(denom)).expect("prime power product")
    }
}

impl fmt::Debug for RatioGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_trivial() {
            return write!(f, "<1>");
        }
        let gens: Vec<String> = self.generators().iter().map(|g| g.to_string()).collect();
        write!(f, "<{}>", gens.join(", "))
    }
}

impl fmt::Display for RatioGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Groups serialize as their sorted canonical generator list in (0, 1).
impl Serialize for RatioGroup {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let gens: Vec<String> = self.generators().iter().map(|g| g.to_string()).collect();
        gens.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for RatioGroup {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let gens = Vec::<PosRat>::deserialize(deserializer)?;
        Ok(RatioGroup::generate(&gens))
    }
}

fn pivot_col(row: &[BigInt]) -> Option<usize> {
    row.iter().position(|e| !e.is_zero())
}

/// Row Hermite normal form of an integer matrix.
///
/// Returns the unique basis with: nonzero rows only, strictly increasing
/// pivot columns, positive pivots, and entries above each pivot reduced into
/// `[0, pivot)`.
pub fn hermite_normal_form(mut rows: Vec<Vec<BigInt>>) -> Vec<Vec<BigInt>> {
    rows.retain(|r| r.iter().any(|e| !e.is_zero()));
    if rows.is_empty() {
        return rows;
    }
    let ncols = rows[0].len();
    let mut r = 0;
    for col in 0..ncols {
        if r == rows.len() {
            break;
        }
        loop {
            let mut best: Option<usize> = None;
            for i in r..rows.len() {
                if rows[i][col].is_zero() {
                    continue;
                }
                match best {
                    Some(b) if rows[b][col].magnitude() <= rows[i][col].magnitude() => {}
                    _ => best = Some(i),
                }
            }
            let Some(b) = best else { break };
            rows.swap(r, b);
            let mut remaining = false;
            for i in (r + 1)..rows.len() {
                if rows[i][col].is_zero() {
                    continue;
                }
                let q = &rows[i][col] / &rows[r][col];
                if !q.is_zero() {
                    for j in 0..ncols {
                        let delta = &q * &rows[r][j];
                        rows[i][j] -= delta;
                    }
                }
                remaining = remaining || !rows[i][col].is_zero();
            }
            if !remaining {
                break;
            }
        }
        if rows[r][col].is_zero() {
            continue;
        }
        if rows[r][col].is_negative() {
            for e in rows[r].iter_mut() {
                *e = -std::mem::take(e);
            }
        }
        for i in 0..r {
            let q = rows[i][col].div_floor(&rows[r][col]);
            if !q.is_zero() {
                for j in 0..ncols {
                    let delta = &q * &rows[r][j];
                    rows[i][j] -= delta;
                }
            }
        }
        r += 1;
    }
    rows.truncate(r);
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(vals: &[(u64, u64)]) -> RatioGroup {
        let gens: Vec<PosRat> = vals.iter().map(|&(n, d)| PosRat::of(n, d)).collect();
        RatioGroup::generate(&gens)
    }

    /// Brute-force membership oracle: search integer exponent combinations of
    /// the generators with exponents in [-bound, bound].
    fn member_by_search(q: &PosRat, gens: &[PosRat], bound: i64) -> bool {
        fn rec(q: &PosRat, gens: &[PosRat], bound: i64, acc: PosRat) -> bool {
            match gens.split_first() {
                None => acc == *q,
                Some((g, rest)) => (-bound..=bound).any(|e| {
                    let acc = &acc * &g.pow(e);
                    rec(q, rest, bound, acc)
                }),
            }
        }
        rec(q, gens, bound, PosRat::one())
    }

    #[test]
    fn one_generates_trivial() {
        assert!(g(&[(1, 1)]).is_trivial());
        assert!(RatioGroup::generate(&[]).is_trivial());
    }

    #[test]
    fn four_ninths_and_two_thirds_collapse() {
        // Oracle: 4/9 = (2/3)^2 and 2/3 generate each other's group up to
        // the missing square root, so the joint group is exactly <2/3>.
        let gens = [PosRat::of(4, 9), PosRat::of(2, 3)];
        assert!(member_by_search(&PosRat::of(4, 9), &[PosRat::of(2, 3)], 3));
        let group = RatioGroup::generate(&gens);
        assert_eq!(group, g(&[(2, 3)]));
        assert_eq!(group.kind(), GroupKind::Cyclic(PosRat::of(2, 3)));
    }

    #[test]
    fn two_and_three_are_rank_two() {
        let group = g(&[(2, 1), (3, 1)]);
        assert_eq!(group.rank(), 2);
        assert_eq!(group.kind(), GroupKind::HigherRank);
    }

    #[test]
    fn join_laws_on_samples() {
        let a = g(&[(2, 1)]);
        let b = g(&[(3, 1)]);
        let c = g(&[(2, 3)]);
        let t = RatioGroup::trivial();
        assert_eq!(a.join(&t), a);
        assert_eq!(t.join(&a), a);
        assert_eq!(a.join(&b), b.join(&a));
        assert_eq!(a.join(&b).join(&c), a.join(&b.join(&c)));
        assert_eq!(a.join(&a), a);
        assert_eq!(g(&[(2, 3)]).join(&g(&[(4, 9)])), g(&[(2, 3)]));
        assert_eq!(a.join(&b).rank(), 2);
    }

    #[test]
    fn membership_examples() {
        let h = g(&[(2, 3)]);
        assert!(h.contains(&PosRat::one()));
        assert!(h.contains(&PosRat::of(8, 27)));
        assert!(!g(&[(3, 1)]).contains(&PosRat::of(2, 1)));
        assert!(!h.contains(&PosRat::of(2, 1)));
        assert!(!h.contains(&PosRat::of(5, 7)));
    }

    #[test]
    fn membership_matches_bounded_search() {
        let gens = [PosRat::of(4, 9), PosRat::of(10, 3), PosRat::of(5, 2)];
        let group = RatioGroup::generate(&gens);
        let candidates = [
            PosRat::of(2, 3),
            PosRat::of(25, 4),
            PosRat::of(100, 9),
            PosRat::of(7, 2),
            PosRat::of(5, 3),
            PosRat::of(4, 1),
        ];
        for q in &candidates {
            assert_eq!(
                group.contains(q),
                member_by_search(q, &gens, 4),
                "membership disagreement for {q}"
            );
        }
    }

    #[test]
    fn generators_are_canonical_and_in_unit_interval() {
        let group = g(&[(3, 2), (9, 4)]);
        let gens = group.generators();
        assert_eq!(gens, vec![PosRat::of(2, 3)]);
        assert_eq!(RatioGroup::generate(&gens), group);
        assert_eq!(group.kind(), GroupKind::Cyclic(PosRat::of(2, 3)));
    }

    #[test]
    fn hnf_reference_shapes() {
        // rows (2,-2),(1,-1) reduce to the single row (1,-1)
        let rows = vec![
            vec![BigInt::from(2), BigInt::from(-2)],
            vec![BigInt::from(1), BigInt::from(-1)],
        ];
        assert_eq!(
            hermite_normal_form(rows),
            vec![vec![BigInt::from(1), BigInt::from(-1)]]
        );
        // identity-shaped input is already canonical
        let rows = vec![
            vec![BigInt::from(1), BigInt::from(0)],
            vec![BigInt::from(0), BigInt::from(1)],
        ];
        assert_eq!(hermite_normal_form(rows.clone()), rows);
    }

    #[test]
    fn serde_round_trip() {
        let group = g(&[(2, 1), (3, 1)]);
        let js = serde_json::to_string(&group).unwrap();
        assert_eq!(js, r#"["1/3","1/2"]"#);
        let back: RatioGroup = serde_json::from_str(&js).unwrap();
        assert_eq!(back, group);
    }
}
