//! Seeded, reproducible row splits: one-shot train/val/test holdout and
//! balanced k-fold partitions for cross-validation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::DataError;

/// Disjoint row-index sets covering `0..n` exactly once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

/// `k` disjoint row-index folds covering `0..n`, plus the inner-validation
/// fraction carved out of each fold's training portion during CV.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldPlan {
    pub k: usize,
    pub folds: Vec<Vec<usize>>,
    pub inner_val_fraction: f64,
    pub seed: u64,
}

impl FoldPlan {
    /// Training indices for fold `i`: every row not in fold `i`.
    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        self.folds
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != fold)
            .flat_map(|(_, f)| f.iter().copied())
            .collect()
    }
}

/// Splits `0..n` into train/val/test by `ratios` after a seeded shuffle.
/// Sizes are `round(n·r_train)`, `round(n·r_val)`, remainder to test
/// (280 with 0.6/0.2/0.2 gives 168/56/56).
pub fn make_holdout_split(n: usize, ratios: [f64; 3], seed: u64) -> Result<SplitPlan, DataError> {
    if ratios.iter().any(|r| *r < 0.0 || !r.is_finite())
        || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(DataError::BadRatios { ratios });
    }
    let train_n = (n as f64 * ratios[0]).round() as usize;
    let val_n = (n as f64 * ratios[1]).round() as usize;
    if train_n + val_n > n {
        return Err(DataError::TooFewSamples { need: train_n + val_n, got: n });
    }
    let test_n = n - train_n - val_n;
    let min_nonzero = ratios
        .iter()
        .copied()
        .filter(|r| *r > 0.0)
        .fold(f64::INFINITY, f64::min);
    let sizes = [train_n, val_n, test_n];
    if ratios.iter().zip(&sizes).any(|(r, s)| *r > 0.0 && *s == 0) {
        return Err(DataError::TooFewSamples {
            need: (1.0 / min_nonzero).ceil() as usize,
            got: n,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let val_end = train_n + val_n;
    Ok(SplitPlan {
        train: order[..train_n].to_vec(),
        val: order[train_n..val_end].to_vec(),
        test: order[val_end..].to_vec(),
        seed,
    })
}

/// Partitions `0..n` into `k` folds whose sizes differ by at most one
/// (the first `n mod k` folds take the extra row).
pub fn make_cv_folds(n: usize, k: usize, seed: u64) -> Result<FoldPlan, DataError> {
    if k == 0 || n < k {
        return Err(DataError::TooFewSamples { need: k.max(1), got: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let size = base + usize::from(i < extra);
        folds.push(order[start..start + size].to_vec());
        start += size;
    }
    Ok(FoldPlan { k, folds, inner_val_fraction: 0.2, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    #[test]
    fn published_cohort_sizes() {
        let plan = make_holdout_split(280, [0.6, 0.2, 0.2], 7).unwrap();
        assert_eq!(plan.train.len(), 168);
        assert_eq!(plan.val.len(), 56);
        assert_eq!(plan.test.len(), 56);
    }

    #[test]
    fn small_cohort_rounding() {
        let plan = make_holdout_split(10, [0.6, 0.2, 0.2], 7).unwrap();
        assert_eq!(
            (plan.train.len(), plan.val.len(), plan.test.len()),
            (6, 2, 2)
        );
    }

    #[test]
    fn same_seed_same_plan_different_seed_differs() {
        let a = make_holdout_split(50, [0.6, 0.2, 0.2], 11).unwrap();
        let b = make_holdout_split(50, [0.6, 0.2, 0.2], 11).unwrap();
        let c = make_holdout_split(50, [0.6, 0.2, 0.2], 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn bad_ratios_rejected() {
        assert!(matches!(
            make_holdout_split(10, [0.5, 0.2, 0.2], 0),
            Err(DataError::BadRatios { .. })
        ));
        assert!(matches!(
            make_holdout_split(10, [-0.2, 1.0, 0.2], 0),
            Err(DataError::BadRatios { .. })
        ));
    }

    #[test]
    fn tiny_cohort_rejected() {
        assert!(matches!(
            make_holdout_split(1, [0.6, 0.2, 0.2], 0),
            Err(DataError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn fold_sizes_differ_by_at_most_one() {
        let plan = make_cv_folds(7, 5, 3).unwrap();
        let sizes: Vec<usize> = plan.folds.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![2, 2, 1, 1, 1]);
        assert_eq!(plan.inner_val_fraction, 0.2);
    }

    #[test]
    fn five_folds_of_280() {
        let plan = make_cv_folds(280, 5, 3).unwrap();
        assert!(plan.folds.iter().all(|f| f.len() == 56));
    }

    #[test]
    fn too_few_rows_for_folds() {
        assert!(matches!(
            make_cv_folds(3, 5, 0),
            Err(DataError::TooFewSamples { need: 5, got: 3 })
        ));
    }

    #[test]
    fn train_indices_complement_fold() {
        let plan = make_cv_folds(20, 4, 1).unwrap();
        for i in 0..4 {
            let train = plan.train_indices(i);
            let fold: BTreeSet<usize> = plan.folds[i].iter().copied().collect();
            assert_eq!(train.len() + fold.len(), 20);
            assert!(train.iter().all(|t| !fold.contains(t)));
        }
    }

    proptest! {
        #[test]
        fn holdout_partitions_exactly(n in 5usize..200, seed in 0u64..1000) {
            let plan = make_holdout_split(n, [0.6, 0.2, 0.2], seed).unwrap();
            let mut all: Vec<usize> = plan
                .train
                .iter()
                .chain(&plan.val)
                .chain(&plan.test)
                .copied()
                .collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }

        #[test]
        fn folds_partition_exactly(n in 5usize..200, k in 2usize..6, seed in 0u64..1000) {
            prop_assume!(n >= k);
            let plan = make_cv_folds(n, k, seed).unwrap();
            let mut all: Vec<usize> = plan.folds.iter().flatten().copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            let max = plan.folds.iter().map(Vec::len).max().unwrap();
            let min = plan.folds.iter().map(Vec::len).min().unwrap();
            prop_assert!(max - min <= 1);
        }
    }
}
