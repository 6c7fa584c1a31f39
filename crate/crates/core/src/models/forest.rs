//! Bagged CART regression forest: bootstrap rows and a random feature
//! subset per split, prediction by averaging tree outputs.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{fit_tree, predict_tree, Tree, TreeParams};
use super::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Candidate features per split; `None` uses max(1, d/3), the usual
    /// regression-forest heuristic.
    pub features_per_split: Option<usize>,
    /// Bootstrap-resample rows per tree. Off, every tree sees all rows and
    /// only feature subsampling decorrelates them.
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 200,
            max_depth: 16,
            min_leaf: 2,
            features_per_split: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
}

/// Each tree draws from its own RNG stream derived from `cfg.seed`, so the
/// result does not depend on fitting order.
pub fn fit_forest(x: &[Vec<f64>], y: &[f64], cfg: &ForestConfig) -> Forest {
    assert!(cfg.n_trees >= 1, "n_trees must be positive");
    assert!(cfg.min_leaf >= 1, "min_leaf must be positive");
    assert_eq!(x.len(), y.len(), "feature/target row mismatch");
    assert!(x.len() >= cfg.min_leaf, "need at least min_leaf samples");
    let n = x.len();
    let width = x[0].len();
    let per_split = cfg.features_per_split.unwrap_or_else(|| (width / 3).max(1)).min(width);
    let params = TreeParams {
        max_depth: cfg.max_depth,
        min_leaf: cfg.min_leaf,
        features_per_split: Some(per_split),
        leaf_l2: 0.0,
    };
    let trees = (0..cfg.n_trees)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, t as u64));
            let samples: Vec<usize> = if cfg.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            fit_tree(x, y, &samples, &params, &mut rng)
        })
        .collect();
    Forest { trees }
}

pub fn predict_forest(forest: &Forest, x: &[Vec<f64>]) -> Vec<f64> {
    x.iter()
        .map(|row| {
            forest.trees.iter().map(|t| predict_tree(t, row)).sum::<f64>()
                / forest.trees.len() as f64
        })
        .collect()
}
