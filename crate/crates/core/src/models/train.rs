//! Mini-batch training for the multiview network: shuffled epochs, the
//! Eq.-style squared-error objective with an L2 penalty on head layers,
//! early stopping on validation RMSE, and restoration of the best-epoch
//! parameters.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AdError, Grads, Optimizer, Tape, Tensor, Var};
use crate::eval::metrics::rmse;

use super::multiview::{
    build_multiview, predict_multiview, Mode, MultiviewModel, LAYER_HEAD, N_OUTPUTS,
};
use super::{derive_seed, ModelError};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Mean batch loss per epoch (MSE plus the head L2 penalty).
    pub train_loss: Vec<f64>,
    /// Pooled validation RMSE per epoch (all four outputs).
    pub val_rmse: Vec<f64>,
    /// Epoch whose parameters the model was restored to.
    pub best_epoch: usize,
    pub epochs_run: usize,
}

/// Pooled RMSE over every (sample, output) cell.
pub fn pooled_rmse(targets: &[[f64; N_OUTPUTS]], preds: &[[f64; N_OUTPUTS]]) -> f64 {
    let flat_t: Vec<f64> = targets.iter().flatten().copied().collect();
    let flat_p: Vec<f64> = preds.iter().flatten().copied().collect();
    rmse(&flat_t, &flat_p)
}

/// Builds the training objective on the tape: mean squared error plus
/// head_l2 · Σ‖θ‖² over head-layer parameters.
fn objective(
    tape: &mut Tape,
    model: &MultiviewModel,
    vars: &indexmap::IndexMap<String, Var>,
    yhat: Var,
    targets: &Tensor,
) -> Var {
    let mut loss = tape.mse(yhat, targets);
    if model.cfg.head_l2 > 0.0 {
        let mut penalty: Option<Var> = None;
        for (name, entry) in model.params.iter() {
            if entry.layer != LAYER_HEAD {
                continue;
            }
            let sq = tape.sum_squares(vars[name.as_str()]);
            penalty = Some(match penalty {
                Some(acc) => tape.add(acc, sq),
                None => sq,
            });
        }
        if let Some(p) = penalty {
            let scaled = tape.scale(p, model.cfg.head_l2);
            loss = tape.add(loss, scaled);
        }
    }
    loss
}

fn target_tensor(y: &[[f64; N_OUTPUTS]]) -> Tensor {
    let rows: Vec<Vec<f64>> = y.iter().map(|r| r.to_vec()).collect();
    Tensor::from_rows(&rows)
}

/// One optimizer step on one mini-batch; returns the batch loss.
fn train_step(
    model: &mut MultiviewModel,
    x: &[Vec<f64>],
    xt: &[Vec<f64>],
    y: &[[f64; N_OUTPUTS]],
    optimizer: &mut Optimizer,
    rng: &mut ChaCha8Rng,
) -> Result<f64, ModelError> {
    let mut tape = Tape::new();
    let vars = model.register(&mut tape);
    let xv = tape.constant(Tensor::from_rows(x));
    let xtv = tape.constant(Tensor::from_rows(xt));
    let out = model.forward(&mut tape, &vars, xv, xtv, &mut Mode::Train { rng })?;
    let targets = target_tensor(y);
    let loss = objective(&mut tape, model, &vars, out.yhat, &targets);
    if let Some(at) = tape.poisoned() {
        return Err(AdError::NonFiniteLoss { at: at.to_string() }.into());
    }
    let loss_value = tape.scalar_value(loss);
    if !loss_value.is_finite() {
        return Err(AdError::NonFiniteLoss { at: "objective".into() }.into());
    }
    tape.backward(loss);
    let grads: Grads = model
        .params
        .iter()
        .filter_map(|(name, _)| tape.grad(vars[name.as_str()]).map(|g| (name.clone(), g.to_vec())))
        .collect();
    optimizer.step(&mut model.params, &grads)?;
    model.steps_trained += 1;
    if let Some((mean, var)) = out.bn_stats {
        model.update_bn_stats(&mean, &var);
    }
    Ok(loss_value)
}

/// Trains a freshly built model. Asserts the fresh state (step counter 0 and
/// parameters identical to a new seeded build), runs shuffled mini-batch
/// epochs, early-stops once validation RMSE has failed to improve for more
/// than `patience` consecutive epochs, and restores the best-epoch state.
#[allow(clippy::too_many_arguments)]
pub fn train_dnn(
    model: &mut MultiviewModel,
    x_train: &[Vec<f64>],
    xt_train: &[Vec<f64>],
    y_train: &[[f64; N_OUTPUTS]],
    x_val: &[Vec<f64>],
    xt_val: &[Vec<f64>],
    y_val: &[[f64; N_OUTPUTS]],
) -> Result<TrainHistory, ModelError> {
    assert_eq!(model.steps_trained, 0, "training requires a freshly built model");
    let fresh = build_multiview(&model.cfg, model.d_primary, model.d_secondary)?;
    assert_eq!(
        model.params, fresh.params,
        "model parameters were modified before training; build a fresh instance"
    );
    let n = x_train.len();
    assert!(n >= 2, "need at least 2 training rows");
    assert!(x_train.len() == xt_train.len() && x_train.len() == y_train.len());
    assert!(!x_val.is_empty() && x_val.len() == xt_val.len() && x_val.len() == y_val.len());

    let cfg = model.cfg.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 1));
    let mut optimizer = Optimizer::new(cfg.optimizer, cfg.learning_rate);
    let mut history =
        TrainHistory { train_loss: Vec::new(), val_rmse: Vec::new(), best_epoch: 0, epochs_run: 0 };
    let mut best_rmse = f64::INFINITY;
    let mut best_params = model.params.clone();
    let mut best_bn = (model.bn_running_mean.clone(), model.bn_running_var.clone());
    let mut strikes = 0usize;
    let mut indices: Vec<usize> = (0..n).collect();

    for epoch in 0..cfg.max_epochs {
        indices.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        let mut start = 0;
        while start < n {
            let mut end = (start + cfg.batch_size).min(n);
            if n - end == 1 {
                end = n; // absorb a trailing singleton (batch norm needs ≥ 2 rows)
            }
            let pick = &indices[start..end];
            start = end;
            let xb: Vec<Vec<f64>> = pick.iter().map(|&i| x_train[i].clone()).collect();
            let xtb: Vec<Vec<f64>> = pick.iter().map(|&i| xt_train[i].clone()).collect();
            let yb: Vec<[f64; N_OUTPUTS]> = pick.iter().map(|&i| y_train[i]).collect();
            epoch_loss += train_step(model, &xb, &xtb, &yb, &mut optimizer, &mut rng)?;
            batches += 1;
        }
        history.train_loss.push(epoch_loss / batches as f64);

        let val_preds = predict_multiview(model, x_val, xt_val)?;
        let val = pooled_rmse(y_val, &val_preds);
        history.val_rmse.push(val);
        if val < best_rmse {
            best_rmse = val;
            history.best_epoch = epoch;
            best_params = model.params.clone();
            best_bn = (model.bn_running_mean.clone(), model.bn_running_var.clone());
            strikes = 0;
        } else {
            strikes += 1;
            if strikes > cfg.patience {
                break;
            }
        }
    }

    model.params = best_params;
    model.bn_running_mean = best_bn.0;
    model.bn_running_var = best_bn.1;
    history.epochs_run = history.val_rmse.len();
    Ok(history)
}

/// Deterministic eval-mode objective value (dropout off, batch norm frozen):
/// the pure function the gradient checker differentiates numerically.
pub fn eval_loss(
    model: &MultiviewModel,
    x: &[Vec<f64>],
    xt: &[Vec<f64>],
    y: &[[f64; N_OUTPUTS]],
) -> Result<f64, ModelError> {
    let mut tape = Tape::new();
    let vars = model.register(&mut tape);
    let xv = tape.constant(Tensor::from_rows(x));
    let xtv = tape.constant(Tensor::from_rows(xt));
    let out = model.forward(&mut tape, &vars, xv, xtv, &mut Mode::Eval)?;
    let targets = target_tensor(y);
    let loss = objective(&mut tape, model, &vars, out.yhat, &targets);
    Ok(tape.scalar_value(loss))
}

/// Eval-mode objective plus analytic parameter gradients.
pub fn eval_loss_grads(
    model: &MultiviewModel,
    x: &[Vec<f64>],
    xt: &[Vec<f64>],
    y: &[[f64; N_OUTPUTS]],
) -> Result<(f64, Grads), ModelError> {
    let mut tape = Tape::new();
    let vars = model.register(&mut tape);
    let xv = tape.constant(Tensor::from_rows(x));
    let xtv = tape.constant(Tensor::from_rows(xt));
    let out = model.forward(&mut tape, &vars, xv, xtv, &mut Mode::Eval)?;
    let targets = target_tensor(y);
    let loss = objective(&mut tape, model, &vars, out.yhat, &targets);
    let value = tape.scalar_value(loss);
    tape.backward(loss);
    let grads: Grads = model
        .params
        .iter()
        .filter_map(|(name, _)| tape.grad(vars[name.as_str()]).map(|g| (name.clone(), g.to_vec())))
        .collect();
    Ok((value, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{gradient_check, ParamStore};
    use crate::models::multiview::MultiviewConfig;
    use rand::RngExt;

    fn rows(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
    }

    fn quick_cfg() -> MultiviewConfig {
        MultiviewConfig {
            hidden_units: 64,
            aux_mlp_layers: 1,
            head_layers: [1, 1, 1, 1],
            attn_dropout: 0.2,
            mlp_dropout: 0.1,
            batch_size: 8,
            ..Default::default()
        }
    }

    #[test]
    fn learns_constant_targets() {
        let cfg = MultiviewConfig { max_epochs: 600, patience: 600, ..quick_cfg() };
        let mut model = build_multiview(&cfg, 5, 6).unwrap();
        let target = [0.3, -0.2, 0.4, 0.1];
        let (xt_, x_) = (rows(32, 6, 1), rows(32, 5, 2));
        let y: Vec<[f64; 4]> = vec![target; 32];
        let hist = train_dnn(
            &mut model,
            &x_[..24],
            &xt_[..24],
            &y[..24],
            &x_[24..],
            &xt_[24..],
            &y[24..],
        )
        .unwrap();
        let best = hist.val_rmse[hist.best_epoch];
        assert!(best < 0.05, "validation rmse {best} on constant targets");
    }

    #[test]
    fn learns_a_linear_map_to_a_tenth_of_target_spread() {
        let n = 120;
        let x = rows(n, 6, 3);
        let xt = rows(n, 8, 4);
        let coef = rows(4, 6, 5);
        let y: Vec<[f64; 4]> = x
            .iter()
            .map(|row| {
                let mut out = [0.0; 4];
                for (o, c) in coef.iter().enumerate() {
                    out[o] = row.iter().zip(c).map(|(a, b)| a * b).sum();
                }
                out
            })
            .collect();
        let flat: Vec<f64> = y.iter().flatten().copied().collect();
        let mean = flat.iter().sum::<f64>() / flat.len() as f64;
        let std =
            (flat.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / flat.len() as f64).sqrt();

        let cfg = MultiviewConfig {
            hidden_units: 128,
            batch_size: 16,
            max_epochs: 900,
            patience: 150,
            ..quick_cfg()
        };
        let mut model = build_multiview(&cfg, 6, 8).unwrap();
        let hist = train_dnn(
            &mut model,
            &x[..96],
            &xt[..96],
            &y[..96],
            &x[96..],
            &xt[96..],
            &y[96..],
        )
        .unwrap();
        let best = hist.val_rmse[hist.best_epoch];
        assert!(best < 0.1 * std, "validation rmse {best} vs target std {std}");
    }

    #[test]
    fn patience_zero_stops_one_epoch_after_first_nonimprovement() {
        let cfg = MultiviewConfig { max_epochs: 200, patience: 0, ..quick_cfg() };
        let mut model = build_multiview(&cfg, 4, 5).unwrap();
        let x = rows(20, 4, 6);
        let xt = rows(20, 5, 7);
        let y: Vec<[f64; 4]> = rows(20, 4, 8).iter().map(|r| [r[0], r[1], r[2], r[3]]).collect();
        let hist =
            train_dnn(&mut model, &x[..14], &xt[..14], &y[..14], &x[14..], &xt[14..], &y[14..])
                .unwrap();
        let mut best = f64::INFINITY;
        let mut first_flat = None;
        for (e, &v) in hist.val_rmse.iter().enumerate() {
            if v < best {
                best = v;
            } else {
                first_flat = Some(e);
                break;
            }
        }
        let first_flat = first_flat.expect("run should hit a non-improving epoch");
        assert_eq!(hist.epochs_run, first_flat + 1);
        assert_eq!(hist.val_rmse.len(), hist.epochs_run);
    }

    #[test]
    fn model_is_restored_to_the_best_epoch() {
        let cfg = MultiviewConfig { max_epochs: 40, patience: 40, ..quick_cfg() };
        let mut model = build_multiview(&cfg, 4, 5).unwrap();
        let x = rows(24, 4, 9);
        let xt = rows(24, 5, 10);
        let y: Vec<[f64; 4]> = rows(24, 4, 11).iter().map(|r| [r[0], r[1], r[2], r[3]]).collect();
        let hist =
            train_dnn(&mut model, &x[..18], &xt[..18], &y[..18], &x[18..], &xt[18..], &y[18..])
                .unwrap();
        let preds = predict_multiview(&model, &x[18..], &xt[18..]).unwrap();
        let recomputed = pooled_rmse(&y[18..], &preds);
        assert_eq!(recomputed, hist.val_rmse[hist.best_epoch]);
        assert_eq!(
            hist.val_rmse[hist.best_epoch],
            hist.val_rmse.iter().copied().fold(f64::INFINITY, f64::min)
        );
    }

    #[test]
    fn non_finite_loss_aborts_with_a_diagnostic() {
        let cfg = MultiviewConfig { max_epochs: 5, ..quick_cfg() };
        let mut model = build_multiview(&cfg, 4, 5).unwrap();
        let x = rows(12, 4, 12);
        let xt = rows(12, 5, 13);
        let y: Vec<[f64; 4]> = vec![[1e160, 0.0, 0.0, 0.0]; 12];
        let err = train_dnn(&mut model, &x[..8], &xt[..8], &y[..8], &x[8..], &xt[8..], &y[8..]);
        assert!(matches!(
            err,
            Err(ModelError::Autodiff(AdError::NonFiniteLoss { .. }))
        ));
    }

    #[test]
    #[should_panic(expected = "freshly built")]
    fn training_twice_is_rejected() {
        let cfg = MultiviewConfig { max_epochs: 2, ..quick_cfg() };
        let mut model = build_multiview(&cfg, 4, 5).unwrap();
        let x = rows(12, 4, 14);
        let xt = rows(12, 5, 15);
        let y: Vec<[f64; 4]> = vec![[0.0; 4]; 12];
        train_dnn(&mut model, &x[..8], &xt[..8], &y[..8], &x[8..], &xt[8..], &y[8..]).unwrap();
        let _ = train_dnn(&mut model, &x[..8], &xt[..8], &y[..8], &x[8..], &xt[8..], &y[8..]);
    }

    #[test]
    #[should_panic(expected = "modified before training")]
    fn tampered_parameters_are_rejected() {
        let cfg = MultiviewConfig { max_epochs: 2, ..quick_cfg() };
        let mut model = build_multiview(&cfg, 4, 5).unwrap();
        model.params.get_mut("aux.0.w").data[0] += 1.0;
        let x = rows(12, 4, 16);
        let xt = rows(12, 5, 17);
        let y: Vec<[f64; 4]> = vec![[0.0; 4]; 12];
        let _ = train_dnn(&mut model, &x[..8], &xt[..8], &y[..8], &x[8..], &xt[8..], &y[8..]);
    }

    #[test]
    fn head_penalty_adds_exactly_two_lambda_theta_to_head_gradients() {
        let mut cfg = quick_cfg();
        cfg.head_l2 = 0.02;
        let model = build_multiview(&cfg, 5, 6).unwrap();
        let mut unpenalized = model.clone();
        unpenalized.cfg.head_l2 = 0.0;
        let x = rows(6, 5, 18);
        let xt = rows(6, 6, 19);
        let y: Vec<[f64; 4]> = rows(6, 4, 20).iter().map(|r| [r[0], r[1], r[2], r[3]]).collect();
        let (_, with) = eval_loss_grads(&model, &x, &xt, &y).unwrap();
        let (_, without) = eval_loss_grads(&unpenalized, &x, &xt, &y).unwrap();
        for (name, entry) in model.params.iter() {
            let gw = &with[name.as_str()];
            let go = &without[name.as_str()];
            if entry.layer == LAYER_HEAD {
                for ((a, b), theta) in gw.iter().zip(go).zip(&entry.tensor.data) {
                    let expected = 2.0 * 0.02 * theta;
                    assert!(
                        (a - b - expected).abs() < 1e-12,
                        "{name}: grad delta {} vs 2λθ {expected}",
                        a - b
                    );
                }
            } else {
                assert_eq!(gw, go, "{name}: body gradients must be unaffected");
            }
        }
    }

    #[test]
    fn assembled_model_gradients_match_central_differences() {
        // Stochastic layers disabled: eval-mode norms, no dropout.
        let cfg = MultiviewConfig {
            hidden_units: 64,
            aux_mlp_layers: 2,
            head_layers: [2, 1, 1, 2],
            ..Default::default()
        };
        let model = build_multiview(&cfg, 6, 16).unwrap();
        let x = rows(8, 6, 21);
        let xt = rows(8, 16, 22);
        let y: Vec<[f64; 4]> = rows(8, 4, 23).iter().map(|r| [r[0], r[1], r[2], r[3]]).collect();
        let (_, grads) = eval_loss_grads(&model, &x, &xt, &y).unwrap();
        let value = move |p: &ParamStore| -> f64 {
            let mut probe = model.clone();
            probe.params = p.clone();
            eval_loss(&probe, &x, &xt, &y).unwrap()
        };
        let report = gradient_check(&value, &grads, &build_multiview(&cfg, 6, 16).unwrap().params, 1e-5, 220, 0);
        assert!(report.coordinates_checked >= 200);
        assert!(
            report.max_rel_error < 1e-4,
            "max relative gradient error {}",
            report.max_rel_error
        );
    }
}
