//! Coefficient of determination and root mean squared error.

use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricPair {
    pub r2: f64,
    pub rmse: f64,
}

impl MetricPair {
    pub fn compute(y: &[f64], pred: &[f64]) -> Result<Self, EvalError> {
        Ok(MetricPair { r2: r2(y, pred)?, rmse: rmse(y, pred) })
    }
}

/// 1 − Σ(y−ŷ)²/Σ(y−ȳ)². Negative when the predictor is worse than the
/// target mean; such values are reported as-is.
pub fn r2(y: &[f64], pred: &[f64]) -> Result<f64, EvalError> {
    assert_eq!(y.len(), pred.len(), "r2 needs equal-length vectors");
    assert!(y.len() >= 2, "r2 needs at least 2 samples");
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    if ss_tot == 0.0 {
        return Err(EvalError::ZeroVarianceTargets);
    }
    let ss_res: f64 = y.iter().zip(pred).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// √(mean squared error), in target units.
pub fn rmse(y: &[f64], pred: &[f64]) -> f64 {
    assert_eq!(y.len(), pred.len(), "rmse needs equal-length vectors");
    assert!(!y.is_empty(), "rmse needs at least 1 sample");
    let mse = y.iter().zip(pred).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64;
    mse.sqrt()
}
