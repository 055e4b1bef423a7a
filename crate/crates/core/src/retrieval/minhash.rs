use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::table::{hash_key, KeySet};

/// Modulus of the universal hash family used as permutations.
pub const MERSENNE_61: u64 = (1 << 61) - 1;

fn mod_mersenne(x: u128) -> u64 {
    let p = MERSENNE_61 as u128;
    let r = (x & p) + (x >> 61);
    let r = (r & p) + (r >> 61);
    if r >= p {
        (r - p) as u64
    } else {
        r as u64
    }
}

/// Generates MinHash sketches. Permutation `i` maps a key to
/// `(a_i * hash_key(key, seed) + b_i) mod (2^61 - 1)`, with `a_i`, `b_i`
/// drawn from ChaCha8 seeded by `seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct MinHasher {
    seed: u64,
    a: Vec<u64>,
    b: Vec<u64>,
}

impl MinHasher {
    pub fn new(seed: u64, num_perm: usize) -> MinHasher {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = Vec::with_capacity(num_perm);
        let mut b = Vec::with_capacity(num_perm);
        for _ in 0..num_perm {
            a.push(rng.gen_range(1..MERSENNE_61));
            b.push(rng.gen_range(0..MERSENNE_61));
        }
        MinHasher { seed, a, b }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_perm(&self) -> usize {
        self.a.len()
    }

    #[inline]
    fn permute(&self, i: usize, h: u64) -> u64 {
        let h = h % MERSENNE_61;
        mod_mersenne(self.a[i] as u128 * h as u128 + self.b[i] as u128)
    }

    pub fn sketch(&self, keys: &KeySet) -> MinHashSketch {
        let mut minima = vec![u64::MAX; self.a.len()];
        for k in keys {
            let h = hash_key(k, self.seed);
            for (i, m) in minima.iter_mut().enumerate() {
                let v = self.permute(i, h);
                if v < *m {
                    *m = v;
                }
            }
        }
        MinHashSketch {
            seed: self.seed,
            minima,
            set_cardinality: keys.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinHashSketch {
    pub seed: u64,
    /// Per-permutation minimum; `u64::MAX` for the empty set.
    pub minima: Vec<u64>,
    pub set_cardinality: usize,
}

impl MinHashSketch {
    pub fn num_perm(&self) -> usize {
        self.minima.len()
    }

    pub fn check_compatible(&self, other: &MinHashSketch) -> Result<()> {
        if self.seed != other.seed || self.num_perm() != other.num_perm() {
            return Err(Error::SketchMismatch(format!(
                "seed/num_perm {}/{} vs {}/{}",
                self.seed,
                self.num_perm(),
                other.seed,
                other.num_perm()
            )));
        }
        Ok(())
    }

    /// Sketch of the union. The cardinality is an upper bound (sum) since
    /// the overlap is unknown.
    pub fn union(&self, other: &MinHashSketch) -> Result<MinHashSketch> {
        self.check_compatible(other)?;
        Ok(MinHashSketch {
            seed: self.seed,
            minima: self
                .minima
                .iter()
                .zip(&other.minima)
                .map(|(a, b)| *a.min(b))
                .collect(),
            set_cardinality: self.set_cardinality + other.set_cardinality,
        })
    }

    /// Fraction of agreeing minima, an unbiased Jaccard estimate.
    pub fn jaccard(&self, other: &MinHashSketch) -> Result<f64> {
        self.check_compatible(other)?;
        if self.set_cardinality == 0 || other.set_cardinality == 0 {
            return Ok(0.0);
        }
        let eq = self
            .minima
            .iter()
            .zip(&other.minima)
            .filter(|(a, b)| a == b)
            .count();
        Ok(eq as f64 / self.num_perm() as f64)
    }

    /// Containment of `self` in `other` from the Jaccard estimate and the
    /// two cardinalities: `J (|Q| + |C|) / (|Q| (1 + J))`, clamped to [0, 1].
    pub fn containment_in(&self, other: &MinHashSketch) -> Result<f64> {
        let j = self.jaccard(other)?;
        if self.set_cardinality == 0 {
            return Err(Error::EmptyQuery);
        }
        let q = self.set_cardinality as f64;
        let c = other.set_cardinality as f64;
        Ok((j * (q + c) / (q * (1.0 + j))).clamp(0.0, 1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(range: std::ops::Range<u32>) -> KeySet {
        range.map(|i| format!("v{i}")).collect()
    }

    #[test]
    fn mersenne_reduction_matches_naive() {
        let p = MERSENNE_61 as u128;
        for x in [0u128, 1, p - 1, p, p + 1, u64::MAX as u128 * 12345, (p - 1) * (p - 1) + p - 1] {
            assert_eq!(mod_mersenne(x) as u128, x % p);
        }
    }

    #[test]
    fn identical_sets_have_jaccard_one() {
        let h = MinHasher::new(1, 128);
        let a = h.sketch(&set(0..100));
        assert_eq!(a.jaccard(&a).unwrap(), 1.0);
        assert_eq!(a.containment_in(&a).unwrap(), 1.0);
    }

    #[test]
    fn mismatched_sketches_error() {
        let a = MinHasher::new(1, 64).sketch(&set(0..10));
        let b = MinHasher::new(2, 64).sketch(&set(0..10));
        let c = MinHasher::new(1, 32).sketch(&set(0..10));
        assert!(a.jaccard(&b).is_err());
        assert!(a.union(&c).is_err());
    }

    proptest! {
        #[test]
        fn superset_minima_are_smaller(lo in 0u32..50, n in 1u32..60, extra in 1u32..60) {
            let h = MinHasher::new(9, 64);
            let sub = h.sketch(&set(lo..lo + n));
            let sup = h.sketch(&set(lo..lo + n + extra));
            prop_assert!(sup.minima.iter().zip(&sub.minima).all(|(a, b)| a <= b));
        }

        #[test]
        fn union_sketch_is_elementwise_min(a in 0u32..40, b in 0u32..40, n in 1u32..40) {
            let h = MinHasher::new(4, 64);
            let sa = set(a..a + n);
            let sb = set(b..b + n);
            let su: KeySet = sa.union(&sb).cloned().collect();
            let merged = h.sketch(&sa).union(&h.sketch(&sb)).unwrap();
            prop_assert_eq!(merged.minima, h.sketch(&su).minima);
        }
    }
}
