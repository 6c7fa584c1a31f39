//! Learners: the cross-attention multiview network and its trainer, the
//! plain-MLP baseline, CART random forests, gradient-boosted trees, a
//! closed-form ridge solver, and random hyperparameter search.

pub mod forest;
pub mod gbt;
pub mod multiview;
pub mod ridge;
pub mod search;
pub mod train;
pub mod tree;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("bad model configuration: {reason}")]
    BadConfig { reason: String },
    #[error("shape mismatch: {context}")]
    ShapeMismatch { context: String },
    #[error("normal equations are singular; use a positive ridge penalty")]
    SingularSystem,
    #[error(transparent)]
    Autodiff(#[from] crate::autodiff::AdError),
}

/// Splitmix64 finalizer: derives an independent seed per stream (tree
/// index, search trial, fold id) from one base seed, deterministic
/// regardless of execution schedule.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub use forest::{fit_forest, predict_forest, Forest, ForestConfig};
pub use gbt::{fit_gbt, predict_gbt, Booster, GbtConfig};
pub use multiview::{
    build_multiview, predict_multiview, ForwardOutput, Mode, MultiviewConfig, MultiviewModel,
    Variant, N_OUTPUTS,
};
pub use ridge::{fit_ridge, predict_ridge};
pub use search::{hyperparameter_search, sample_config, SearchOutcome, SearchSpace};
pub use train::{train_dnn, TrainHistory};
pub use tree::{fit_tree, predict_tree, Tree, TreeParams};
