//! Gradient saliency: which input columns move each predicted output.
//!
//! For every output we take the mean absolute gradient of the prediction
//! with respect to each input column over a set of samples (deterministic
//! evaluation mode), then scale each channel so its largest entry is 1.

use crate::autodiff::{Tape, Tensor};
use crate::models::{Mode, ModelError, MultiviewModel, N_OUTPUTS};
use serde::{Deserialize, Serialize};

/// Channel-normalized mean absolute input gradients, one row per output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyReport {
    /// `primary[o][j]`: influence of primary column j on output o, in [0, 1].
    pub primary: [Vec<f64>; N_OUTPUTS],
    /// `secondary[o][j]`: influence of secondary column j on output o.
    pub secondary: [Vec<f64>; N_OUTPUTS],
}

/// Per-sample gradients of one output with respect to both input views:
/// returns (B×d_primary, B×d_secondary) matrices.
///
/// Evaluation-mode rows are independent, so the gradient of the batch sum
/// (a ones-vector contraction of the head column) recovers each sample's own
/// gradient in a single backward pass.
pub fn output_input_gradients(
    model: &MultiviewModel,
    x_rows: &[Vec<f64>],
    xt_rows: &[Vec<f64>],
    output: usize,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>), ModelError> {
    assert!(output < N_OUTPUTS, "output index out of range");
    if x_rows.is_empty()
        || x_rows.len() != xt_rows.len()
        || x_rows.iter().any(|r| r.len() != model.d_primary)
        || xt_rows.iter().any(|r| r.len() != model.d_secondary)
    {
        return Err(ModelError::ShapeMismatch {
            context: format!(
                "saliency inputs must be equal-length non-empty row sets of widths {} and {}",
                model.d_primary, model.d_secondary
            ),
        });
    }
    let n = x_rows.len();
    let mut tape = Tape::new();
    let vars = model.register(&mut tape);
    let xv = tape.param(&Tensor::from_rows(x_rows));
    let xtv = tape.param(&Tensor::from_rows(xt_rows));
    let out = model.forward(&mut tape, &vars, xv, xtv, &mut Mode::Eval)?;
    let ones = tape.constant(Tensor::from_vec(1, n, vec![1.0; n]));
    let total = tape.matmul(ones, out.heads[output]);
    tape.backward(total);
    let unpack = |grad: Option<&[f64]>, width: usize| -> Vec<Vec<f64>> {
        match grad {
            Some(flat) => flat.chunks(width).map(<[f64]>::to_vec).collect(),
            // A view the variant never reads has no gradient path at all.
            None => vec![vec![0.0; width]; n],
        }
    };
    let gx = unpack(tape.grad(xv), model.d_primary);
    let gxt = unpack(tape.grad(xtv), model.d_secondary);
    Ok((gx, gxt))
}

fn mean_abs_columns(rows: &[Vec<f64>]) -> Vec<f64> {
    let width = rows[0].len();
    let mut out = vec![0.0; width];
    for row in rows {
        for (acc, v) in out.iter_mut().zip(row) {
            *acc += v.abs();
        }
    }
    for acc in &mut out {
        *acc /= rows.len() as f64;
    }
    out
}

fn normalize_to_unit_max(values: &mut [f64]) {
    let max = values.iter().cloned().fold(0.0f64, f64::max);
    if max > 0.0 {
        for v in values {
            *v /= max;
        }
    }
}

/// Computes the saliency report over the given samples. Each channel row is
/// scaled by its own maximum, so the top entry is exactly 1 unless the whole
/// channel is zero (a view the model ignores stays all-zero).
pub fn saliency(
    model: &MultiviewModel,
    x_rows: &[Vec<f64>],
    xt_rows: &[Vec<f64>],
) -> Result<SaliencyReport, ModelError> {
    let mut primary: [Vec<f64>; N_OUTPUTS] = Default::default();
    let mut secondary: [Vec<f64>; N_OUTPUTS] = Default::default();
    for o in 0..N_OUTPUTS {
        let (gx, gxt) = output_input_gradients(model, x_rows, xt_rows, o)?;
        let mut p = mean_abs_columns(&gx);
        let mut s = mean_abs_columns(&gxt);
        normalize_to_unit_max(&mut p);
        normalize_to_unit_max(&mut s);
        primary[o] = p;
        secondary[o] = s;
    }
    Ok(SaliencyReport { primary, secondary })
}
