use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Seeded K-fold split of `n` rows: `(train, test)` index lists per fold,
/// each sorted. Test folds partition the rows and differ in size by at
/// most one.
pub fn kfold(n: usize, k: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k < 2 {
        return Err(Error::InvalidParameter("at least 2 folds are required".into()));
    }
    if n < k {
        return Err(Error::InvalidParameter(format!("{n} rows cannot fill {k} folds")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold_of = vec![0usize; n];
    for (pos, &row) in idx.iter().enumerate() {
        fold_of[row] = pos * k / n;
    }
    Ok((0..k)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&r| fold_of[r] == f);
            (train, test)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn folds_partition_rows(n in 2usize..200, k in 2usize..8, seed in 0u64..50) {
            prop_assume!(n >= k);
            let folds = kfold(n, k, seed).unwrap();
            prop_assert_eq!(folds.len(), k);
            let mut seen = vec![0; n];
            for (train, test) in &folds {
                prop_assert_eq!(train.len() + test.len(), n);
                for &t in test {
                    seen[t] += 1;
                    prop_assert!(train.binary_search(&t).is_err());
                }
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
            let sizes: Vec<usize> = folds.iter().map(|f| f.1.len()).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }

    #[test]
    fn rejects_bad_counts() {
        assert!(kfold(10, 1, 0).is_err());
        assert!(kfold(3, 5, 0).is_err());
    }
}
