//! Quantization of probability vectors onto the simplex lattice
//! `Q_ℓ = { o / ℓ : o ∈ ℕ^V, Σ o_i = ℓ }`, the bit cost of indexing one
//! lattice point, and an exact rank/unrank codec for lattice points.
//!
//! Points are ranked in lexicographic order of their numerator vectors, so
//! for `V = 2, ℓ = 2` the order is `(0,2), (1,1), (2,0)`. Ranks can exceed
//! any machine integer for realistic vocabularies and are carried as
//! [`BigUint`].

use std::cmp::Ordering;

use num_bigint::BigUint;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::prob::ProbVector;

/// Integer composition `o_1 + ... + o_V = ℓ`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LatticePoint {
    counts: Vec<u32>,
    ell: u32,
}

impl LatticePoint {
    pub fn new(counts: Vec<u32>, ell: u32) -> Result<Self> {
        if ell == 0 {
            return Err(Error::InvalidLattice("resolution must be at least 1".into()));
        }
        if counts.is_empty() {
            return Err(Error::InvalidLattice("empty numerator vector".into()));
        }
        let total: u64 = counts.iter().map(|&c| c as u64).sum();
        if total != ell as u64 {
            return Err(Error::InvalidLattice(format!(
                "numerators sum to {total}, expected {ell}"
            )));
        }
        Ok(Self { counts, ell })
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn ell(&self) -> u32 {
        self.ell
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    /// Probability `o_i / ℓ` of entry `i`.
    pub fn prob(&self, i: usize) -> f64 {
        self.counts[i] as f64 / self.ell as f64
    }

    pub fn dequantize(&self) -> ProbVector {
        ProbVector::from_raw((0..self.dim()).map(|i| self.prob(i)).collect())
    }
}

/// Bits needed to index one point of `Q_ℓ` for a vocabulary of size `V`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BitBudget {
    pub ell: u32,
    pub vocab: u32,
    pub bits: u32,
}

/// Nearest point of `Q_ℓ` in ℓ1 distance.
///
/// Floors `ℓ·p`, then hands the leftover units to the entries with the
/// largest fractional parts (lowest index first on ties).
pub fn quantize(p: &ProbVector, ell: u32) -> Result<LatticePoint> {
    if ell == 0 {
        return Err(Error::InvalidLattice("resolution must be at least 1".into()));
    }
    let scale = ell as f64;
    let dim = p.len();
    let mut counts = Vec::with_capacity(dim);
    let mut fracs = Vec::with_capacity(dim);
    for &x in p.as_slice() {
        let scaled = x * scale;
        let floor = scaled.floor().min(scale);
        counts.push(floor as u32);
        fracs.push(scaled - floor);
    }

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        fracs[b]
            .partial_cmp(&fracs[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });

    let floors: u64 = counts.iter().map(|&c| c as u64).sum();
    match floors.cmp(&(ell as u64)) {
        Ordering::Less => {
            let leftover = (ell as u64 - floors) as usize;
            for k in 0..leftover {
                counts[order[k % dim]] += 1;
            }
        }
        Ordering::Greater => {
            // Only reachable when the input mass rounds above 1: take units
            // back from the smallest fractional parts.
            let mut excess = floors - ell as u64;
            for &i in order.iter().rev().cycle() {
                if excess == 0 {
                    break;
                }
                if counts[i] > 0 {
                    counts[i] -= 1;
                    excess -= 1;
                }
            }
        }
        Ordering::Equal => {}
    }
    LatticePoint::new(counts, ell)
}

pub fn dequantize(point: &LatticePoint) -> ProbVector {
    point.dequantize()
}

/// Exact binomial coefficient.
pub fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc *= n - i;
        acc /= i + 1;
    }
    acc
}

/// Number of compositions of `total` into `parts` non-negative parts.
fn compositions(total: u64, parts: u64) -> BigUint {
    if parts == 0 {
        return if total == 0 { BigUint::one() } else { BigUint::zero() };
    }
    binomial(total + parts - 1, parts - 1)
}

/// `|Q_ℓ| = C(ℓ+V-1, V-1)`.
pub fn lattice_size(ell: u32, vocab: u32) -> BigUint {
    compositions(ell as u64, vocab as u64)
}

pub fn bit_cost(ell: u32, vocab: u32) -> Result<BitBudget> {
    if ell == 0 || vocab < 2 {
        return Err(Error::InvalidLattice(format!(
            "bit cost needs ell >= 1 and V >= 2, got ell={ell}, V={vocab}"
        )));
    }
    // ceil(log2 n) is the bit length of n - 1.
    let size = lattice_size(ell, vocab);
    let bits = (size - 1u32).bits() as u32;
    Ok(BitBudget { ell, vocab, bits })
}

pub fn rank(point: &LatticePoint) -> BigUint {
    let dim = point.dim() as u64;
    let mut remaining = point.ell() as u64;
    let mut r = BigUint::zero();
    for (i, &o) in point.counts().iter().enumerate() {
        let tail = dim - i as u64 - 1;
        if tail == 0 {
            break;
        }
        let o = o as u64;
        // Σ_{j<o} compositions(remaining - j, tail), by the hockey-stick identity.
        if o > 0 {
            r += binomial(remaining + tail, tail) - binomial(remaining - o + tail, tail);
        }
        remaining -= o;
    }
    r
}

pub fn unrank(r: &BigUint, ell: u32, vocab: u32) -> Result<LatticePoint> {
    if ell == 0 || vocab == 0 {
        return Err(Error::InvalidLattice(format!(
            "unrank needs ell >= 1 and V >= 1, got ell={ell}, V={vocab}"
        )));
    }
    let size = lattice_size(ell, vocab);
    if *r >= size {
        return Err(Error::RankOutOfRange {
            rank: r.to_string(),
            size: size.to_string(),
        });
    }
    let mut rest = r.clone();
    let mut remaining = ell as u64;
    let mut counts = Vec::with_capacity(vocab as usize);
    for i in 0..vocab as u64 {
        let tail = vocab as u64 - i - 1;
        if tail == 0 {
            counts.push(remaining as u32);
            break;
        }
        // block(j) = compositions(remaining - j, tail) = C(remaining - j + tail - 1, tail - 1)
        let mut block = compositions(remaining, tail);
        let mut o = 0u64;
        while rest >= block {
            rest -= &block;
            let n = remaining - o + tail - 1;
            block = block * (remaining - o) / n;
            o += 1;
        }
        counts.push(o as u32);
        remaining -= o;
    }
    LatticePoint::new(counts, ell)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Every composition of `ell` into `dim` parts, in lexicographic order.
    fn enumerate(ell: u32, dim: usize) -> Vec<Vec<u32>> {
        fn go(rem: u32, left: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
            if left == 1 {
                cur.push(rem);
                out.push(cur.clone());
                cur.pop();
                return;
            }
            for o in 0..=rem {
                cur.push(o);
                go(rem - o, left - 1, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        go(ell, dim, &mut Vec::new(), &mut out);
        out
    }

    fn l1(p: &ProbVector, q: &[u32], ell: u32) -> f64 {
        p.as_slice()
            .iter()
            .zip(q)
            .map(|(a, &o)| (a - o as f64 / ell as f64).abs())
            .sum()
    }

    #[test]
    fn worked_quantization_matches_brute_force() {
        let p = ProbVector::new(vec![0.4, 0.35, 0.25]).unwrap();
        let all = enumerate(4, 3);
        assert_eq!(all.len(), 15);
        let best = all
            .iter()
            .min_by(|a, b| l1(&p, a, 4).partial_cmp(&l1(&p, b, 4)).unwrap())
            .unwrap();
        assert_eq!(best, &vec![2, 1, 1]);
        assert_eq!(quantize(&p, 4).unwrap().counts(), &[2, 1, 1]);
    }

    #[test]
    fn vertices_and_lattice_members_are_fixed_points() {
        for ell in 1..10 {
            let p = ProbVector::one_hot(3, 0);
            assert_eq!(quantize(&p, ell).unwrap().counts(), &[ell, 0, 0]);
        }
        for counts in enumerate(5, 4) {
            let point = LatticePoint::new(counts.clone(), 5).unwrap();
            let q = quantize(&point.dequantize(), 5).unwrap();
            assert_eq!(q, point);
        }
    }

    #[test]
    fn dequantize_values() {
        let point = LatticePoint::new(vec![2, 1, 1], 4).unwrap();
        assert_eq!(dequantize(&point).as_slice(), &[0.5, 0.25, 0.25]);
        let vertex = LatticePoint::new(vec![7, 0, 0, 0], 7).unwrap();
        assert_eq!(vertex.dequantize().as_slice(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let p = ProbVector::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(quantize(&p, 1).unwrap().counts(), &[1, 0]);
        let p = ProbVector::uniform(4);
        assert_eq!(quantize(&p, 2).unwrap().counts(), &[1, 1, 0, 0]);
    }

    #[test]
    fn zero_resolution_rejected() {
        assert!(quantize(&ProbVector::uniform(3), 0).is_err());
        assert!(LatticePoint::new(vec![1, 1], 3).is_err());
    }

    #[test]
    fn bit_cost_examples() {
        assert_eq!(bit_cost(4, 3).unwrap().bits, 4);
        assert_eq!(bit_cost(1, 2).unwrap().bits, 1);
        assert_eq!(bit_cost(3, 4).unwrap().bits, 5);
        assert!(bit_cost(0, 3).is_err());
        assert!(bit_cost(3, 1).is_err());
    }

    #[test]
    fn binomial_small_table() {
        assert_eq!(binomial(6, 2), BigUint::from(15u32));
        assert_eq!(binomial(6, 3), BigUint::from(20u32));
        assert_eq!(binomial(5, 7), BigUint::zero());
        assert_eq!(binomial(0, 0), BigUint::one());
    }

    #[test]
    fn rank_examples() {
        for (counts, r) in [(vec![0, 2], 0u32), (vec![1, 1], 1), (vec![2, 0], 2)] {
            let p = LatticePoint::new(counts.clone(), 2).unwrap();
            assert_eq!(rank(&p), BigUint::from(r));
            assert_eq!(unrank(&BigUint::from(r), 2, 2).unwrap().counts(), &counts[..]);
        }
        let single = LatticePoint::new(vec![5], 5).unwrap();
        assert_eq!(rank(&single), BigUint::zero());
        assert_eq!(unrank(&BigUint::zero(), 5, 1).unwrap(), single);
    }

    #[test]
    fn rank_agrees_with_enumeration_order() {
        for (ell, dim) in [(5u32, 3usize), (6, 4), (3, 5)] {
            for (i, counts) in enumerate(ell, dim).into_iter().enumerate() {
                let p = LatticePoint::new(counts, ell).unwrap();
                assert_eq!(rank(&p), BigUint::from(i));
                assert_eq!(unrank(&BigUint::from(i), ell, dim as u32).unwrap(), p);
            }
        }
    }

    #[test]
    fn unrank_out_of_range() {
        assert!(matches!(
            unrank(&BigUint::from(3u32), 2, 2),
            Err(Error::RankOutOfRange { .. })
        ));
    }

    #[test]
    fn quantize_is_l1_optimal_on_small_lattices() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for dim in 2..=5usize {
            for ell in 1..=6u32 {
                let points = enumerate(ell, dim);
                for _ in 0..200 {
                    let w: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>().powi(3)).collect();
                    let p = ProbVector::from_weights(w).unwrap();
                    let best = points.iter().map(|o| l1(&p, o, ell)).fold(f64::MAX, f64::min);
                    let got = quantize(&p, ell).unwrap();
                    assert!(l1(&p, got.counts(), ell) <= best + 1e-12);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn quantized_point_is_valid(
            w in proptest::collection::vec(0.0f64..1.0, 2..40),
            ell in 1u32..300,
        ) {
            prop_assume!(w.iter().sum::<f64>() > 0.0);
            let p = ProbVector::from_weights(w).unwrap();
            let q = quantize(&p, ell).unwrap();
            prop_assert_eq!(q.counts().iter().map(|&c| c as u64).sum::<u64>(), ell as u64);
            prop_assert!(ProbVector::new(q.dequantize().into_inner()).is_ok());
        }

        #[test]
        fn unrank_inverts_rank(counts in proptest::collection::vec(0u32..4, 4)) {
            let ell: u32 = counts.iter().sum();
            prop_assume!(ell > 0);
            let p = LatticePoint::new(counts, ell).unwrap();
            prop_assert_eq!(unrank(&rank(&p), ell, 4).unwrap(), p);
        }

        #[test]
        fn ranks_fit_in_bit_budget(ell in 1u32..40, vocab in 2u32..40) {
            let size = lattice_size(ell, vocab);
            let b = bit_cost(ell, vocab).unwrap().bits;
            prop_assert!(size <= BigUint::one() << b);
            prop_assert!(BigUint::one() << (b - 1) < size);
        }
    }
}
