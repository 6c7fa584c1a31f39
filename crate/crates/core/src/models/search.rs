//! Random hyperparameter search: samples configurations uniformly from the
//! documented ranges, trains each candidate from a fresh seeded build, and
//! keeps the trained model with the lowest mean per-output validation RMSE.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::eval::metrics::rmse;

use super::multiview::{
    build_multiview, predict_multiview, MultiviewConfig, MultiviewModel, N_OUTPUTS,
};
use super::train::{train_dnn, TrainHistory};
use super::{derive_seed, ModelError};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchSpace {
    /// Inclusive hidden-width bounds; samples are rounded to token multiples.
    pub hidden: (usize, usize),
    pub aux_mlp_layers: (usize, usize),
    pub attn_dropout: (f64, f64),
    pub mlp_dropout: (f64, f64),
    /// Inclusive per-output head-depth bounds.
    pub head_layers: [(usize, usize); N_OUTPUTS],
    pub learning_rates: Vec<f64>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            hidden: (64, 256),
            aux_mlp_layers: (1, 3),
            attn_dropout: (0.2, 0.4),
            mlp_dropout: (0.1, 0.3),
            head_layers: [(1, 3), (1, 3), (1, 3), (1, 5)],
            learning_rates: vec![1e-3, 5e-4, 1e-4],
        }
    }
}

/// Draws one configuration from `space`; fields the search does not explore
/// (tokens, batch size, epoch budget, patience, optimizer, variant) are
/// inherited from `base`.
pub fn sample_config(
    space: &SearchSpace,
    base: &MultiviewConfig,
    rng: &mut ChaCha8Rng,
) -> MultiviewConfig {
    let tokens = base.tk.max(1);
    let lo = space.hidden.0.div_ceil(tokens);
    let hi = space.hidden.1 / tokens;
    let hidden_units = tokens * rng.random_range(lo..=hi);
    let aux_mlp_layers = rng.random_range(space.aux_mlp_layers.0..=space.aux_mlp_layers.1);
    let attn_dropout = rng.random_range(space.attn_dropout.0..=space.attn_dropout.1);
    let mlp_dropout = rng.random_range(space.mlp_dropout.0..=space.mlp_dropout.1);
    let mut head_layers = [0; N_OUTPUTS];
    for (slot, &(lo, hi)) in head_layers.iter_mut().zip(&space.head_layers) {
        *slot = rng.random_range(lo..=hi);
    }
    let learning_rate = space.learning_rates[rng.random_range(0..space.learning_rates.len())];
    MultiviewConfig {
        hidden_units,
        aux_mlp_layers,
        attn_dropout,
        mlp_dropout,
        head_layers,
        learning_rate,
        ..base.clone()
    }
}

#[derive(Debug)]
pub struct SearchOutcome {
    pub best_config: MultiviewConfig,
    pub best_model: MultiviewModel,
    pub best_history: TrainHistory,
    /// Mean of the four per-output validation RMSEs for the winner.
    pub best_score: f64,
    /// Score of every trial, in sampling order.
    pub trial_scores: Vec<f64>,
}

/// Mean over outputs of the per-output validation RMSE.
pub fn mean_output_rmse(targets: &[[f64; N_OUTPUTS]], preds: &[[f64; N_OUTPUTS]]) -> f64 {
    (0..N_OUTPUTS)
        .map(|o| {
            let t: Vec<f64> = targets.iter().map(|r| r[o]).collect();
            let p: Vec<f64> = preds.iter().map(|r| r[o]).collect();
            rmse(&t, &p)
        })
        .sum::<f64>()
        / N_OUTPUTS as f64
}

#[allow(clippy::too_many_arguments)]
pub fn hyperparameter_search(
    space: &SearchSpace,
    budget: usize,
    seed: u64,
    base: &MultiviewConfig,
    d_primary: usize,
    d_secondary: usize,
    x_train: &[Vec<f64>],
    xt_train: &[Vec<f64>],
    y_train: &[[f64; N_OUTPUTS]],
    x_val: &[Vec<f64>],
    xt_val: &[Vec<f64>],
    y_val: &[[f64; N_OUTPUTS]],
) -> Result<SearchOutcome, ModelError> {
    assert!(budget >= 1, "search budget must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<SearchOutcome> = None;
    let mut trial_scores = Vec::with_capacity(budget);
    for trial in 0..budget {
        let mut cfg = sample_config(space, base, &mut rng);
        cfg.seed = derive_seed(seed, trial as u64);
        let mut model = build_multiview(&cfg, d_primary, d_secondary)?;
        let history =
            train_dnn(&mut model, x_train, xt_train, y_train, x_val, xt_val, y_val)?;
        let preds = predict_multiview(&model, x_val, xt_val)?;
        let score = mean_output_rmse(y_val, &preds);
        trial_scores.push(score);
        let improves = best.as_ref().is_none_or(|b| score < b.best_score);
        if improves {
            best = Some(SearchOutcome {
                best_config: cfg,
                best_model: model,
                best_history: history,
                best_score: score,
                trial_scores: Vec::new(),
            });
        }
    }
    let mut outcome = best.expect("budget ≥ 1 guarantees a winner");
    debug_assert!(trial_scores.iter().all(|&s| outcome.best_score <= s));
    outcome.trial_scores = trial_scores;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::multiview::Variant;

    fn rows(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
    }

    fn tiny_base() -> MultiviewConfig {
        MultiviewConfig {
            batch_size: 8,
            max_epochs: 15,
            patience: 4,
            ..Default::default()
        }
    }

    fn tiny_data() -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<[f64; 4]>) {
        let x = rows(40, 5, 1);
        let xt = rows(40, 6, 2);
        let y: Vec<[f64; 4]> =
            x.iter().map(|r| [r[0], r[1] * 0.5, -r[2], r[3] - r[4]]).collect();
        (x, xt, y)
    }

    #[test]
    fn sampled_configurations_respect_the_documented_ranges() {
        let space = SearchSpace::default();
        let base = MultiviewConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let cfg = sample_config(&space, &base, &mut rng);
            assert!((64..=256).contains(&cfg.hidden_units));
            assert_eq!(cfg.hidden_units % 4, 0);
            assert!((1..=3).contains(&cfg.aux_mlp_layers));
            assert!((0.2..=0.4).contains(&cfg.attn_dropout));
            assert!((0.1..=0.3).contains(&cfg.mlp_dropout));
            for (o, &l) in cfg.head_layers.iter().enumerate() {
                assert!((1..=if o == 3 { 5 } else { 3 }).contains(&l), "head {o} depth {l}");
            }
            assert!([1e-3, 5e-4, 1e-4].contains(&cfg.learning_rate));
            assert_eq!(cfg.batch_size, base.batch_size);
            assert_eq!(cfg.variant, Variant::Full);
        }
    }

    #[test]
    fn budget_one_returns_the_single_trial() {
        let (x, xt, y) = tiny_data();
        let out = hyperparameter_search(
            &SearchSpace::default(),
            1,
            7,
            &tiny_base(),
            5,
            6,
            &x[..30],
            &xt[..30],
            &y[..30],
            &x[30..],
            &xt[30..],
            &y[30..],
        )
        .unwrap();
        assert_eq!(out.trial_scores.len(), 1);
        assert_eq!(out.best_score, out.trial_scores[0]);
    }

    #[test]
    fn search_is_deterministic_and_winner_dominates() {
        let (x, xt, y) = tiny_data();
        let run = || {
            hyperparameter_search(
                &SearchSpace::default(),
                3,
                11,
                &tiny_base(),
                5,
                6,
                &x[..30],
                &xt[..30],
                &y[..30],
                &x[30..],
                &xt[30..],
                &y[30..],
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.best_score, b.best_score);
        assert_eq!(a.trial_scores, b.trial_scores);
        assert_eq!(a.best_config.hidden_units, b.best_config.hidden_units);
        assert_eq!(a.best_config.learning_rate, b.best_config.learning_rate);
        for s in &a.trial_scores {
            assert!(a.best_score <= *s);
        }
        assert_eq!(a.best_model.params, b.best_model.params);
    }
}
