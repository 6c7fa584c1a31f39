//! Gradient-boosted regression trees under squared loss: each round fits a
//! depth-limited CART tree to the current residuals, leaves are shrunk by an
//! L2 count penalty, and the ensemble grows by a shrinkage-scaled step.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{fit_tree, predict_tree, Tree, TreeParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtConfig {
    pub n_rounds: usize,
    /// Shrinkage applied to every tree's contribution, in (0, 1].
    pub learning_rate: f64,
    pub max_depth: usize,
    /// Leaf value = Σresidual / (count + leaf_l2).
    pub leaf_l2: f64,
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for GbtConfig {
    fn default() -> Self {
        GbtConfig {
            n_rounds: 300,
            learning_rate: 0.1,
            max_depth: 3,
            leaf_l2: 1.0,
            min_leaf: 2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Booster {
    pub base_score: f64,
    pub shrinkage: f64,
    pub trees: Vec<Tree>,
}

pub fn fit_gbt(x: &[Vec<f64>], y: &[f64], cfg: &GbtConfig) -> Booster {
    assert!(cfg.n_rounds >= 1, "n_rounds must be positive");
    assert!(
        cfg.learning_rate > 0.0 && cfg.learning_rate <= 1.0,
        "shrinkage must lie in (0, 1]"
    );
    assert!(cfg.min_leaf >= 1, "min_leaf must be positive");
    assert!(cfg.leaf_l2 >= 0.0, "leaf_l2 must be nonnegative");
    assert_eq!(x.len(), y.len(), "feature/target row mismatch");
    assert!(!x.is_empty(), "cannot boost on zero samples");

    let n = x.len();
    let base_score = y.iter().sum::<f64>() / n as f64;
    let mut current: Vec<f64> = vec![base_score; n];
    let params = TreeParams {
        max_depth: cfg.max_depth,
        min_leaf: cfg.min_leaf,
        features_per_split: None,
        leaf_l2: cfg.leaf_l2,
    };
    let all: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trees = Vec::with_capacity(cfg.n_rounds);
    for _ in 0..cfg.n_rounds {
        let residuals: Vec<f64> = y.iter().zip(&current).map(|(t, f)| t - f).collect();
        let tree = fit_tree(x, &residuals, &all, &params, &mut rng);
        for (f, row) in current.iter_mut().zip(x) {
            *f += cfg.learning_rate * predict_tree(&tree, row);
        }
        trees.push(tree);
    }
    Booster { base_score, shrinkage: cfg.learning_rate, trees }
}

pub fn predict_gbt(booster: &Booster, x: &[Vec<f64>]) -> Vec<f64> {
    x.iter()
        .map(|row| {
            booster.base_score
                + booster.shrinkage
                    * booster.trees.iter().map(|t| predict_tree(t, row)).sum::<f64>()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::metrics::rmse;
    use approx::assert_abs_diff_eq;
    use rand::RngExt;

    fn random_dataset(n: usize, d: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> =
            (0..n).map(|_| (0..d).map(|_| r.random_range(-2.0..2.0)).collect()).collect();
        let y: Vec<f64> =
            x.iter().map(|row| row[0] * row[1] + 0.5 * row[2] + r.random_range(-0.2..0.2)).collect();
        (x, y)
    }

    #[test]
    fn one_unshrunken_full_round_memorizes_distinct_rows() {
        let (x, y) = random_dataset(25, 3, 1);
        let cfg = GbtConfig {
            n_rounds: 1,
            learning_rate: 1.0,
            max_depth: usize::MAX,
            leaf_l2: 0.0,
            min_leaf: 1,
            seed: 0,
        };
        let booster = fit_gbt(&x, &y, &cfg);
        for (p, t) in predict_gbt(&booster, &x).iter().zip(&y) {
            assert_abs_diff_eq!(*p, *t, epsilon = 1e-10);
        }
    }

    #[test]
    fn huge_leaf_penalty_collapses_to_base_score() {
        let (x, y) = random_dataset(20, 3, 2);
        let cfg = GbtConfig { leaf_l2: 1e12, n_rounds: 10, ..Default::default() };
        let booster = fit_gbt(&x, &y, &cfg);
        let base = y.iter().sum::<f64>() / y.len() as f64;
        for p in predict_gbt(&booster, &x) {
            assert_abs_diff_eq!(p, base, epsilon = 1e-6);
        }
    }

    #[test]
    fn training_rmse_never_increases_with_rounds() {
        for seed in [3, 4, 5] {
            let (x, y) = random_dataset(50, 4, seed);
            let mut previous = f64::INFINITY;
            for rounds in [1, 2, 5, 10, 20, 40] {
                let cfg = GbtConfig { n_rounds: rounds, ..Default::default() };
                let err = rmse(&y, &predict_gbt(&fit_gbt(&x, &y, &cfg), &x));
                assert!(
                    err <= previous + 1e-12,
                    "rmse rose from {previous} to {err} at {rounds} rounds (seed {seed})"
                );
                previous = err;
            }
        }
    }

    #[test]
    fn boosting_beats_the_constant_baseline() {
        let (x, y) = random_dataset(80, 4, 6);
        let booster = fit_gbt(&x, &y, &GbtConfig::default());
        let base = vec![y.iter().sum::<f64>() / y.len() as f64; y.len()];
        assert!(rmse(&y, &predict_gbt(&booster, &x)) < 0.5 * rmse(&y, &base));
    }

    #[test]
    fn same_config_gives_identical_boosters() {
        let (x, y) = random_dataset(30, 3, 7);
        let cfg = GbtConfig { n_rounds: 15, ..Default::default() };
        let a = fit_gbt(&x, &y, &cfg);
        let b = fit_gbt(&x, &y, &cfg);
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    #[test]
    #[should_panic(expected = "shrinkage")]
    fn zero_shrinkage_is_rejected() {
        let (x, y) = random_dataset(10, 3, 8);
        fit_gbt(&x, &y, &GbtConfig { learning_rate: 0.0, ..Default::default() });
    }
}
