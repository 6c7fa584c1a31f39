//! Per-output convex combinations of model predictions. Weights are fit by
//! exhaustive search over a simplex grid on validation predictions, so the
//! fitted combination can never score worse than any single member.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const N_OUTPUTS: usize = 4;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("weight fitting needs at least one validation sample")]
    EmptyValidation,
    #[error("shape mismatch: {context}")]
    ShapeMismatch { context: String },
}

/// One convex weight vector per output; `weights[o][k]` scales model k's
/// prediction of output o.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleWeights {
    pub weights: [Vec<f64>; N_OUTPUTS],
    /// Grid-fitted validation RMSE per output (the achieved minimum).
    pub val_rmse: [f64; N_OUTPUTS],
}

/// Enumerates all integer compositions of `total` into `parts` slots in
/// lexicographically descending order, so the first strict minimum found is
/// also the tie-break winner (larger ω0 first, then larger ω1, …).
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    fn rec(total: usize, parts: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            prefix.push(total);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in (0..=total).rev() {
            prefix.push(first);
            rec(total - first, parts - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(total, parts, &mut Vec::new(), &mut out);
    out
}

/// Fits per-output weights over the member predictions by exhaustive grid
/// search with spacing `grid_step`, minimizing validation RMSE. Ties break
/// toward the larger leading weight, then lexicographically.
pub fn fit_weights(
    val_preds: &[Vec<[f64; N_OUTPUTS]>],
    val_targets: &[[f64; N_OUTPUTS]],
    grid_step: f64,
) -> Result<EnsembleWeights, EnsembleError> {
    assert!(grid_step > 0.0 && grid_step <= 1.0, "grid step must lie in (0, 1]");
    assert!(!val_preds.is_empty(), "need at least one member model");
    if val_targets.is_empty() {
        return Err(EnsembleError::EmptyValidation);
    }
    let n = val_targets.len();
    if let Some(bad) = val_preds.iter().position(|p| p.len() != n) {
        return Err(EnsembleError::ShapeMismatch {
            context: format!(
                "member {bad} predicts {} rows but validation has {n}",
                val_preds[bad].len()
            ),
        });
    }
    let members = val_preds.len();
    let levels = (1.0 / grid_step).round() as usize;
    assert!(
        (levels as f64 * grid_step - 1.0).abs() < 1e-9,
        "grid step must divide 1 evenly"
    );

    let grid = compositions(levels, members);
    let mut weights: [Vec<f64>; N_OUTPUTS] = Default::default();
    let mut best_rmse = [0.0; N_OUTPUTS];
    for o in 0..N_OUTPUTS {
        let mut best: Option<(f64, &Vec<usize>)> = None;
        for point in &grid {
            let mut sse = 0.0;
            for (i, target) in val_targets.iter().enumerate() {
                let combined: f64 = point
                    .iter()
                    .zip(val_preds)
                    .map(|(&units, preds)| units as f64 / levels as f64 * preds[i][o])
                    .sum();
                let e = combined - target[o];
                sse += e * e;
            }
            let rmse = (sse / n as f64).sqrt();
            // Strictly-better with a relative margin, so rounding noise from
            // re-associating identical predictions cannot defeat the
            // tie-break (first point in descending order wins ties).
            if best.as_ref().is_none_or(|(b, _)| rmse < *b * (1.0 - 1e-12)) {
                best = Some((rmse, point));
            }
        }
        let (rmse, point) = best.expect("grid is never empty");
        weights[o] = point.iter().map(|&u| u as f64 / levels as f64).collect();
        best_rmse[o] = rmse;
    }
    Ok(EnsembleWeights { weights, val_rmse: best_rmse })
}

/// Applies fitted weights to member predictions.
pub fn ensemble_predict(
    preds: &[Vec<[f64; N_OUTPUTS]>],
    w: &EnsembleWeights,
) -> Result<Vec<[f64; N_OUTPUTS]>, EnsembleError> {
    if preds.is_empty() || w.weights[0].len() != preds.len() {
        return Err(EnsembleError::ShapeMismatch {
            context: format!(
                "{} members but weights cover {}",
                preds.len(),
                w.weights[0].len()
            ),
        });
    }
    let n = preds[0].len();
    if let Some(bad) = preds.iter().position(|p| p.len() != n) {
        return Err(EnsembleError::ShapeMismatch {
            context: format!("member {bad} predicts {} rows, member 0 predicts {n}", preds[bad].len()),
        });
    }
    Ok((0..n)
        .map(|i| {
            let mut row = [0.0; N_OUTPUTS];
            for (o, slot) in row.iter_mut().enumerate() {
                *slot = w.weights[o]
                    .iter()
                    .zip(preds)
                    .map(|(wk, p)| wk * p[i][o])
                    .sum();
            }
            row
        })
        .collect())
}
