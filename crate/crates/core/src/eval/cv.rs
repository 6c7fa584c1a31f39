//! The corrected evaluation protocol: every fold builds all models from
//! scratch, carves an inner train/validation split out of its training
//! portion, keeps augmentation and every fitted statistic inside the inner
//! training rows, and only then scores the held-out rows. Each fold logs
//! which rows each statistic consumed so leakage is checkable after the
//! fact, not assumed.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{augment_records, AugmentConfig, Origin};
use crate::dataset::{CleanRecord, DataError, Encoder, FoldPlan, SplitPlan, Standardizer};
use crate::ensemble::{ensemble_predict, fit_weights, EnsembleError, EnsembleWeights};
use crate::eval::metrics::{rmse, MetricPair};
use crate::eval::report::{
    AggregateMetrics, CVReport, EntryReport, FoldAudit, FoldMetrics, LabeledSaliency,
    LeakageAudit, PValueEntry,
};
use crate::eval::saliency::{saliency, SaliencyReport};
use crate::eval::wilcoxon::wilcoxon_one_sided;
use crate::eval::EvalError;
use crate::featmap::{extract_secondary, FeatError};
use crate::models::{
    build_multiview, derive_seed, fit_forest, fit_gbt, hyperparameter_search, predict_forest,
    predict_gbt, predict_multiview, train_dnn, ForestConfig, GbtConfig, ModelError,
    MultiviewConfig, MultiviewModel, SearchSpace, Variant, N_OUTPUTS,
};
use crate::priors::OrganCriteria;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Feature(#[from] FeatError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
}

/// One row of the evaluation roster. Ensemble rows combine the listed base
/// models with per-output weights fitted on inner validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RosterEntry {
    Dnn,
    DnnPrimary,
    DnnSecondary,
    Mlp,
    Forest,
    Gbt,
    DnnGbt,
    DnnForest,
    DnnGbtForest,
}

/// Base learners a roster row can draw on. Ensembles list the network first
/// so weight ties break toward it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum BaseKind {
    DnnFull,
    DnnPrimary,
    DnnSecondary,
    Mlp,
    Forest,
    Gbt,
}

impl RosterEntry {
    /// The ablation study set: the full network, its two single-view
    /// variants, and the three ensemble combinations.
    pub const ABLATION: [RosterEntry; 6] = [
        RosterEntry::Dnn,
        RosterEntry::DnnPrimary,
        RosterEntry::DnnSecondary,
        RosterEntry::DnnGbt,
        RosterEntry::DnnForest,
        RosterEntry::DnnGbtForest,
    ];

    /// The benchmark set: every standalone method plus the ensembles.
    pub const BENCHMARK: [RosterEntry; 7] = [
        RosterEntry::Dnn,
        RosterEntry::Mlp,
        RosterEntry::Forest,
        RosterEntry::Gbt,
        RosterEntry::DnnGbt,
        RosterEntry::DnnForest,
        RosterEntry::DnnGbtForest,
    ];

    pub fn label(self) -> &'static str {
        match self {
            RosterEntry::Dnn => "DNN",
            RosterEntry::DnnPrimary => "DNN-Primary",
            RosterEntry::DnnSecondary => "DNN-Secondary",
            RosterEntry::Mlp => "MLP",
            RosterEntry::Forest => "RF",
            RosterEntry::Gbt => "XGB",
            RosterEntry::DnnGbt => "DNN+XGB",
            RosterEntry::DnnForest => "DNN+RF",
            RosterEntry::DnnGbtForest => "DNN+XGB+RF",
        }
    }

    pub fn parse(label: &str) -> Option<Self> {
        [
            RosterEntry::Dnn,
            RosterEntry::DnnPrimary,
            RosterEntry::DnnSecondary,
            RosterEntry::Mlp,
            RosterEntry::Forest,
            RosterEntry::Gbt,
            RosterEntry::DnnGbt,
            RosterEntry::DnnForest,
            RosterEntry::DnnGbtForest,
        ]
        .into_iter()
        .find(|e| e.label() == label)
    }

    fn members(self) -> &'static [BaseKind] {
        match self {
            RosterEntry::Dnn => &[BaseKind::DnnFull],
            RosterEntry::DnnPrimary => &[BaseKind::DnnPrimary],
            RosterEntry::DnnSecondary => &[BaseKind::DnnSecondary],
            RosterEntry::Mlp => &[BaseKind::Mlp],
            RosterEntry::Forest => &[BaseKind::Forest],
            RosterEntry::Gbt => &[BaseKind::Gbt],
            RosterEntry::DnnGbt => &[BaseKind::DnnFull, BaseKind::Gbt],
            RosterEntry::DnnForest => &[BaseKind::DnnFull, BaseKind::Forest],
            RosterEntry::DnnGbtForest => &[BaseKind::DnnFull, BaseKind::Gbt, BaseKind::Forest],
        }
    }
}

/// Parses `"benchmark"`, `"ablation"`, or a comma-separated list of row
/// labels (e.g. `"DNN,RF,DNN+RF"`). Rejects unknown and duplicate labels.
pub fn parse_roster(spec: &str) -> Result<Vec<RosterEntry>, String> {
    match spec.trim() {
        "benchmark" => return Ok(RosterEntry::BENCHMARK.to_vec()),
        "ablation" => return Ok(RosterEntry::ABLATION.to_vec()),
        _ => {}
    }
    let mut roster = Vec::new();
    for part in spec.split(',') {
        let label = part.trim();
        let entry = RosterEntry::parse(label).ok_or_else(|| {
            format!(
                "unknown roster entry {label:?}; expected \"benchmark\", \"ablation\", or a \
                 comma-separated list of: DNN, DNN-Primary, DNN-Secondary, MLP, RF, XGB, \
                 DNN+XGB, DNN+RF, DNN+XGB+RF"
            )
        })?;
        if roster.contains(&entry) {
            return Err(format!("duplicate roster entry {label:?}"));
        }
        roster.push(entry);
    }
    if roster.is_empty() {
        return Err("roster is empty".to_string());
    }
    Ok(roster)
}

/// Everything the evaluation protocol needs besides the data and the split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvOptions {
    pub roster: Vec<RosterEntry>,
    pub base_config: MultiviewConfig,
    pub search_space: SearchSpace,
    /// Hyperparameter search trials per fold for the network rows;
    /// 0 trains `base_config` directly.
    pub budget: usize,
    pub seed: u64,
    pub augment: AugmentConfig,
    pub criteria: OrganCriteria,
    pub forest: ForestConfig,
    pub gbt: GbtConfig,
    /// Ensemble weight grid spacing.
    pub grid_step: f64,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            roster: RosterEntry::BENCHMARK.to_vec(),
            base_config: MultiviewConfig::default(),
            search_space: SearchSpace::default(),
            budget: 0,
            seed: 0,
            augment: AugmentConfig::default(),
            criteria: OrganCriteria::default(),
            forest: ForestConfig::default(),
            gbt: GbtConfig::default(),
            grid_step: 0.05,
        }
    }
}

// Per-fold seed streams, combined with the fold seed via `derive_seed`.
// Public because they are part of the reproducibility contract: a training
// run that derives its seeds the same way (same base seed, same streams)
// produces bit-identical models to the ones this module evaluates.
pub const STREAM_INNER_SPLIT: u64 = 1;
pub const STREAM_SMOTE: u64 = 2;
pub const STREAM_SEARCH: u64 = 3;
pub const STREAM_DNN_BUILD: u64 = 4;
pub const STREAM_DNN_PRIMARY: u64 = 5;
pub const STREAM_DNN_SECONDARY: u64 = 6;
pub const STREAM_MLP_BUILD: u64 = 7;
pub const STREAM_MLP_SEARCH: u64 = 8;
pub const STREAM_FOREST: u64 = 9; // .. 9 + N_OUTPUTS
pub const STREAM_GBT: u64 = 13; // .. 13 + N_OUTPUTS

struct BaseOutputs {
    val_preds: Vec<[f64; N_OUTPUTS]>,
    test_preds: Vec<[f64; N_OUTPUTS]>,
    inner_rmse: [f64; N_OUTPUTS],
    dnn_model: Option<MultiviewModel>,
}

struct SplitEval {
    y_test: Vec<[f64; N_OUTPUTS]>,
    entry_test_preds: Vec<Vec<[f64; N_OUTPUTS]>>,
    entry_inner_rmse: Vec<[f64; N_OUTPUTS]>,
    entry_weights: Vec<Option<EnsembleWeights>>,
    chosen_dnn_config: Option<MultiviewConfig>,
    saliency: Vec<(String, SaliencyReport)>,
    audit: FoldAudit,
}

fn per_output_rmse(y: &[[f64; N_OUTPUTS]], p: &[[f64; N_OUTPUTS]]) -> [f64; N_OUTPUTS] {
    let mut out = [0.0; N_OUTPUTS];
    for (o, slot) in out.iter_mut().enumerate() {
        let yo: Vec<f64> = y.iter().map(|r| r[o]).collect();
        let po: Vec<f64> = p.iter().map(|r| r[o]).collect();
        *slot = rmse(&yo, &po);
    }
    out
}

/// Deterministic inner train/validation split of a fold's training pool.
fn inner_split(pool: &[usize], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    assert!(pool.len() >= 2, "training pool must have at least two rows");
    let mut shuffled = pool.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val =
        ((pool.len() as f64 * fraction).round() as usize).clamp(1, pool.len() - 1);
    let mut val = shuffled[..n_val].to_vec();
    let mut train = shuffled[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    (train, val)
}

fn concat_views(xs: &[Vec<f64>], xts: &[Vec<f64>]) -> Vec<Vec<f64>> {
    xs.iter()
        .zip(xts)
        .map(|(a, b)| a.iter().chain(b.iter()).copied().collect())
        .collect()
}

/// Trains every base model the roster needs on one train/val/test split and
/// assembles the roster rows. All statistics (augmentation, standardization,
/// early stopping, weight fitting) are recorded in the returned audit.
#[allow(clippy::too_many_arguments)]
fn evaluate_split(
    records: &[CleanRecord],
    inner_train: &[usize],
    inner_val: &[usize],
    test_ids: &[usize],
    fold: usize,
    opts: &CvOptions,
    fold_seed: u64,
    compute_saliency: bool,
) -> Result<SplitEval, PipelineError> {
    // Augmentation: synthetic rows may only interpolate inner-train rows.
    let train_recs: Vec<CleanRecord> =
        inner_train.iter().map(|&i| records[i].clone()).collect();
    let aug_cfg = AugmentConfig { seed: derive_seed(fold_seed, STREAM_SMOTE), ..opts.augment };
    let (aug_recs, origins, _too_few_rare) = augment_records(&train_recs, &aug_cfg);
    for origin in &origins {
        if let Origin::Synthetic { seed, neighbor } = origin {
            assert!(
                *seed < inner_train.len() && *neighbor < inner_train.len(),
                "synthetic rows must interpolate inner-train rows only"
            );
        }
    }

    // All standardization statistics come from the augmented inner-train set.
    let encoder = Encoder::fit(&aug_recs)?;
    let sec_train_raw: Vec<Vec<f64>> = aug_recs
        .iter()
        .map(|r| extract_secondary(r, &opts.criteria).map(|s| s.to_vec()))
        .collect::<Result<_, _>>()?;
    let sec_std = Standardizer::fit(&sec_train_raw)?;

    let x_train: Vec<Vec<f64>> =
        encoder.transform_all(&aug_recs).into_iter().map(|s| s.x).collect();
    let xt_train = sec_std.transform(&sec_train_raw);
    let y_train: Vec<[f64; N_OUTPUTS]> = aug_recs.iter().map(|r| r.targets().y).collect();
    let dp = x_train[0].len();
    let ds = xt_train[0].len();

    let views_for = |ids: &[usize]| -> Result<
        (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<[f64; N_OUTPUTS]>),
        PipelineError,
    > {
        let mut xs = Vec::with_capacity(ids.len());
        let mut xts = Vec::with_capacity(ids.len());
        let mut ys = Vec::with_capacity(ids.len());
        for &i in ids {
            let rec = &records[i];
            xs.push(encoder.transform(rec).x);
            xts.push(sec_std.transform_row(&extract_secondary(rec, &opts.criteria)?.to_vec()));
            ys.push(rec.targets().y);
        }
        Ok((xs, xts, ys))
    };
    let (x_val, xt_val, y_val) = views_for(inner_val)?;
    let (x_test, xt_test, y_test) = views_for(test_ids)?;

    // Which base learners does the roster need? Keep the full network first
    // so its (possibly searched) configuration exists before the single-view
    // ablations that reuse it.
    let precedence = [
        BaseKind::DnnFull,
        BaseKind::DnnPrimary,
        BaseKind::DnnSecondary,
        BaseKind::Mlp,
        BaseKind::Forest,
        BaseKind::Gbt,
    ];
    let needed: Vec<BaseKind> = precedence
        .into_iter()
        .filter(|k| opts.roster.iter().any(|e| e.members().contains(k)))
        .collect();

    let tree_features_needed =
        needed.contains(&BaseKind::Forest) || needed.contains(&BaseKind::Gbt);
    let (tree_train, tree_val, tree_test) = if tree_features_needed {
        (
            concat_views(&x_train, &xt_train),
            concat_views(&x_val, &xt_val),
            concat_views(&x_test, &xt_test),
        )
    } else {
        (Vec::new(), Vec::new(), Vec::new())
    };

    let train_network = |cfg: &MultiviewConfig| -> Result<MultiviewModel, PipelineError> {
        let mut model = build_multiview(cfg, dp, ds)?;
        train_dnn(&mut model, &x_train, &xt_train, &y_train, &x_val, &xt_val, &y_val)?;
        Ok(model)
    };
    let network_outputs = |model: MultiviewModel| -> Result<BaseOutputs, PipelineError> {
        let val_preds = predict_multiview(&model, &x_val, &xt_val)?;
        let test_preds = predict_multiview(&model, &x_test, &xt_test)?;
        let inner_rmse = per_output_rmse(&y_val, &val_preds);
        Ok(BaseOutputs { val_preds, test_preds, inner_rmse, dnn_model: Some(model) })
    };

    let mut chosen_dnn_config: Option<MultiviewConfig> = None;
    let mut bases: Vec<(BaseKind, BaseOutputs)> = Vec::new();
    for kind in needed {
        let outputs = match kind {
            BaseKind::DnnFull => {
                let cfg0 = MultiviewConfig {
                    variant: Variant::Full,
                    seed: derive_seed(fold_seed, STREAM_DNN_BUILD),
                    ..opts.base_config.clone()
                };
                let (model, used_cfg) = if opts.budget >= 1 {
                    let outcome = hyperparameter_search(
                        &opts.search_space,
                        opts.budget,
                        derive_seed(fold_seed, STREAM_SEARCH),
                        &cfg0,
                        dp,
                        ds,
                        &x_train,
                        &xt_train,
                        &y_train,
                        &x_val,
                        &xt_val,
                        &y_val,
                    )?;
                    (outcome.best_model, outcome.best_config)
                } else {
                    (train_network(&cfg0)?, cfg0)
                };
                chosen_dnn_config = Some(used_cfg);
                network_outputs(model)?
            }
            BaseKind::DnnPrimary | BaseKind::DnnSecondary => {
                // Ablations reuse the full network's configuration (searched
                // or not) with one view routed out, so the comparison
                // isolates the view rather than the hyperparameters.
                let template =
                    chosen_dnn_config.clone().unwrap_or_else(|| opts.base_config.clone());
                let (variant, stream) = if kind == BaseKind::DnnPrimary {
                    (Variant::PrimaryOnly, STREAM_DNN_PRIMARY)
                } else {
                    (Variant::SecondaryOnly, STREAM_DNN_SECONDARY)
                };
                let cfg = MultiviewConfig {
                    variant,
                    seed: derive_seed(fold_seed, stream),
                    ..template
                };
                network_outputs(train_network(&cfg)?)?
            }
            BaseKind::Mlp => {
                // The baseline competes on equal terms: it gets its own
                // search over the same ranges rather than inheriting the
                // attention network's winner.
                let cfg0 = MultiviewConfig {
                    variant: Variant::MlpBaseline,
                    seed: derive_seed(fold_seed, STREAM_MLP_BUILD),
                    ..opts.base_config.clone()
                };
                let model = if opts.budget >= 1 {
                    hyperparameter_search(
                        &opts.search_space,
                        opts.budget,
                        derive_seed(fold_seed, STREAM_MLP_SEARCH),
                        &cfg0,
                        dp,
                        ds,
                        &x_train,
                        &xt_train,
                        &y_train,
                        &x_val,
                        &xt_val,
                        &y_val,
                    )?
                    .best_model
                } else {
                    train_network(&cfg0)?
                };
                network_outputs(model)?
            }
            BaseKind::Forest => {
                let mut val_cols = Vec::with_capacity(N_OUTPUTS);
                let mut test_cols = Vec::with_capacity(N_OUTPUTS);
                for o in 0..N_OUTPUTS {
                    let cfg = ForestConfig {
                        seed: derive_seed(fold_seed, STREAM_FOREST + o as u64),
                        ..opts.forest.clone()
                    };
                    let yo: Vec<f64> = y_train.iter().map(|r| r[o]).collect();
                    let forest = fit_forest(&tree_train, &yo, &cfg);
                    val_cols.push(predict_forest(&forest, &tree_val));
                    test_cols.push(predict_forest(&forest, &tree_test));
                }
                let val_preds = columns_to_rows(&val_cols);
                let test_preds = columns_to_rows(&test_cols);
                let inner_rmse = per_output_rmse(&y_val, &val_preds);
                BaseOutputs { val_preds, test_preds, inner_rmse, dnn_model: None }
            }
            BaseKind::Gbt => {
                let mut val_cols = Vec::with_capacity(N_OUTPUTS);
                let mut test_cols = Vec::with_capacity(N_OUTPUTS);
                for o in 0..N_OUTPUTS {
                    let cfg = GbtConfig {
                        seed: derive_seed(fold_seed, STREAM_GBT + o as u64),
                        ..opts.gbt.clone()
                    };
                    let yo: Vec<f64> = y_train.iter().map(|r| r[o]).collect();
                    let booster = fit_gbt(&tree_train, &yo, &cfg);
                    val_cols.push(predict_gbt(&booster, &tree_val));
                    test_cols.push(predict_gbt(&booster, &tree_test));
                }
                let val_preds = columns_to_rows(&val_cols);
                let test_preds = columns_to_rows(&test_cols);
                let inner_rmse = per_output_rmse(&y_val, &val_preds);
                BaseOutputs { val_preds, test_preds, inner_rmse, dnn_model: None }
            }
        };
        bases.push((kind, outputs));
    }
    fn find_base(bases: &[(BaseKind, BaseOutputs)], kind: BaseKind) -> &BaseOutputs {
        &bases.iter().find(|(k, _)| *k == kind).expect("base was trained").1
    }
    let base = |kind: BaseKind| find_base(&bases, kind);

    // Assemble the roster rows.
    let mut entry_test_preds = Vec::with_capacity(opts.roster.len());
    let mut entry_inner_rmse = Vec::with_capacity(opts.roster.len());
    let mut entry_weights = Vec::with_capacity(opts.roster.len());
    let mut any_ensemble = false;
    for entry in &opts.roster {
        let members = entry.members();
        if members.len() == 1 {
            let b = base(members[0]);
            entry_test_preds.push(b.test_preds.clone());
            entry_inner_rmse.push(b.inner_rmse);
            entry_weights.push(None);
        } else {
            any_ensemble = true;
            let member_val: Vec<Vec<[f64; N_OUTPUTS]>> =
                members.iter().map(|k| base(*k).val_preds.clone()).collect();
            let member_test: Vec<Vec<[f64; N_OUTPUTS]>> =
                members.iter().map(|k| base(*k).test_preds.clone()).collect();
            let w = fit_weights(&member_val, &y_val, opts.grid_step)?;
            for o in 0..N_OUTPUTS {
                for k in members {
                    debug_assert!(
                        w.val_rmse[o] <= base(*k).inner_rmse[o] + 1e-9,
                        "ensemble must not lose to a member on inner validation"
                    );
                }
            }
            entry_test_preds.push(ensemble_predict(&member_test, &w)?);
            entry_inner_rmse.push(w.val_rmse);
            entry_weights.push(Some(w));
        }
    }

    // Saliency for the network rows, on this split's (transformed) test set.
    let mut saliency_reports = Vec::new();
    if compute_saliency {
        for entry in &opts.roster {
            let members = entry.members();
            if members.len() == 1 {
                if let Some(model) = &base(members[0]).dnn_model {
                    saliency_reports.push((
                        entry.label().to_string(),
                        saliency(model, &x_test, &xt_test)?,
                    ));
                }
            }
        }
    }

    let any_dnn = bases.iter().any(|(_, b)| b.dnn_model.is_some());
    let audit = FoldAudit {
        fold,
        held_out_rows: test_ids.to_vec(),
        inner_train_rows: inner_train.to_vec(),
        inner_val_rows: inner_val.to_vec(),
        standardization_rows: inner_train.to_vec(),
        smote_source_rows: if opts.augment.enabled { inner_train.to_vec() } else { Vec::new() },
        early_stopping_rows: if any_dnn { inner_val.to_vec() } else { Vec::new() },
        ensemble_weight_rows: if any_ensemble { inner_val.to_vec() } else { Vec::new() },
    };

    Ok(SplitEval {
        y_test,
        entry_test_preds,
        entry_inner_rmse,
        entry_weights,
        chosen_dnn_config,
        saliency: saliency_reports,
        audit,
    })
}

fn columns_to_rows(cols: &[Vec<f64>]) -> Vec<[f64; N_OUTPUTS]> {
    assert_eq!(cols.len(), N_OUTPUTS);
    (0..cols[0].len())
        .map(|i| [cols[0][i], cols[1][i], cols[2][i], cols[3][i]])
        .collect()
}

/// Accumulates per-split results and renders the final report.
struct Accumulator<'a> {
    opts: &'a CvOptions,
    protocol: &'static str,
    fold_metrics: Vec<Vec<FoldMetrics>>,
    inner_rmse: Vec<Vec<[f64; N_OUTPUTS]>>,
    weights: Vec<Vec<Option<EnsembleWeights>>>,
    pooled_sq_errors: Vec<[Vec<f64>; N_OUTPUTS]>,
    audits: Vec<FoldAudit>,
    chosen_configs: Vec<MultiviewConfig>,
    saliency: Vec<LabeledSaliency>,
    fold_sizes: Vec<usize>,
}

impl<'a> Accumulator<'a> {
    fn new(opts: &'a CvOptions, protocol: &'static str) -> Self {
        let n = opts.roster.len();
        Accumulator {
            opts,
            protocol,
            fold_metrics: vec![Vec::new(); n],
            inner_rmse: vec![Vec::new(); n],
            weights: vec![Vec::new(); n],
            pooled_sq_errors: (0..n).map(|_| Default::default()).collect(),
            audits: Vec::new(),
            chosen_configs: Vec::new(),
            saliency: Vec::new(),
            fold_sizes: Vec::new(),
        }
    }

    fn push_split(&mut self, fold: usize, eval: SplitEval) -> Result<(), PipelineError> {
        let test_size = eval.y_test.len();
        self.fold_sizes.push(test_size);
        for (e, preds) in eval.entry_test_preds.iter().enumerate() {
            let mut outputs = [MetricPair { r2: 0.0, rmse: 0.0 }; N_OUTPUTS];
            for (o, slot) in outputs.iter_mut().enumerate() {
                let yo: Vec<f64> = eval.y_test.iter().map(|r| r[o]).collect();
                let po: Vec<f64> = preds.iter().map(|r| r[o]).collect();
                *slot = MetricPair::compute(&yo, &po)?;
                self.pooled_sq_errors[e][o]
                    .extend(yo.iter().zip(&po).map(|(y, p)| (y - p) * (y - p)));
            }
            self.fold_metrics[e].push(FoldMetrics { fold, test_size, outputs });
            self.inner_rmse[e].push(eval.entry_inner_rmse[e]);
            self.weights[e].push(eval.entry_weights[e].clone());
        }
        if let Some(cfg) = eval.chosen_dnn_config {
            self.chosen_configs.push(cfg);
        }
        for (label, report) in eval.saliency {
            self.saliency.push(LabeledSaliency { label, fold, report });
        }
        self.audits.push(eval.audit);
        Ok(())
    }

    fn finish(self, seed: u64) -> CVReport {
        let roster = &self.opts.roster;
        // Headline row for significance testing: most members, first wins
        // ties (the full ensemble when present, otherwise the first row).
        let headline = roster
            .iter()
            .enumerate()
            .max_by_key(|(i, e)| (e.members().len(), usize::MAX - i))
            .map(|(i, _)| i)
            .expect("roster is non-empty");

        let mut p_values = Vec::new();
        if roster.len() >= 2 {
            for o in 0..N_OUTPUTS {
                let pooled_rmse = |e: usize| -> f64 {
                    let sq = &self.pooled_sq_errors[e][o];
                    (sq.iter().sum::<f64>() / sq.len() as f64).sqrt()
                };
                let alt = (0..roster.len())
                    .filter(|e| *e != headline)
                    .min_by(|a, b| pooled_rmse(*a).partial_cmp(&pooled_rmse(*b)).unwrap())
                    .expect("at least two roster rows");
                let p = wilcoxon_one_sided(
                    &self.pooled_sq_errors[headline][o],
                    &self.pooled_sq_errors[alt][o],
                )
                .ok();
                p_values.push(PValueEntry {
                    output: crate::dataset::TARGET_NAMES[o].to_string(),
                    reference: roster[headline].label().to_string(),
                    alternative: roster[alt].label().to_string(),
                    p,
                });
            }
        }

        let entries: Vec<EntryReport> = roster
            .iter()
            .enumerate()
            .map(|(e, entry)| {
                let folds = self.fold_metrics[e].clone();
                let aggregate = (0..N_OUTPUTS)
                    .map(|o| {
                        let r2s: Vec<f64> = folds.iter().map(|f| f.outputs[o].r2).collect();
                        let rmses: Vec<f64> = folds.iter().map(|f| f.outputs[o].rmse).collect();
                        let (mean_r2, std_r2) = mean_std(&r2s);
                        let (mean_rmse, std_rmse) = mean_std(&rmses);
                        AggregateMetrics {
                            output: crate::dataset::TARGET_NAMES[o].to_string(),
                            mean_r2,
                            std_r2,
                            mean_rmse,
                            std_rmse,
                        }
                    })
                    .collect();
                EntryReport {
                    label: entry.label().to_string(),
                    folds,
                    aggregate,
                    inner_val_rmse: self.inner_rmse[e].clone(),
                    weights: self.weights[e].clone(),
                }
            })
            .collect();

        CVReport {
            protocol: self.protocol.to_string(),
            fold_count: self.audits.len(),
            fold_test_sizes: self.fold_sizes,
            seed,
            budget: self.opts.budget,
            base_config: self.opts.base_config.clone(),
            forest_config: self.opts.forest.clone(),
            gbt_config: self.opts.gbt.clone(),
            augment_config: self.opts.augment,
            grid_step: self.opts.grid_step,
            chosen_dnn_configs: self.chosen_configs,
            entries,
            p_values,
            saliency: self.saliency,
            audit: LeakageAudit { folds: self.audits },
        }
    }
}

/// Sample mean and standard deviation (n−1 denominator; 0 for n < 2).
fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn check_indices(records: &[CleanRecord], ids: &[usize]) -> Result<(), PipelineError> {
    for &i in ids {
        if i >= records.len() {
            return Err(DataError::StatsIndexOutOfRange { index: i, len: records.len() }.into());
        }
    }
    Ok(())
}

/// Cross-validated evaluation of the whole roster under the corrected
/// protocol (see module docs). Deterministic for fixed inputs and seed.
pub fn run_cv(
    records: &[CleanRecord],
    plan: &FoldPlan,
    opts: &CvOptions,
) -> Result<CVReport, PipelineError> {
    assert!(!opts.roster.is_empty(), "roster must not be empty");
    assert!(plan.k >= 2 && plan.folds.len() == plan.k, "fold plan must define k ≥ 2 folds");
    for fold in &plan.folds {
        check_indices(records, fold)?;
    }

    let mut acc = Accumulator::new(opts, "cross-validation");
    for fold in 0..plan.k {
        let fold_seed = derive_seed(opts.seed, fold as u64 + 1);
        let pool = plan.train_indices(fold);
        let (inner_train, inner_val) =
            inner_split(&pool, plan.inner_val_fraction, derive_seed(fold_seed, STREAM_INNER_SPLIT));
        let eval = evaluate_split(
            records,
            &inner_train,
            &inner_val,
            &plan.folds[fold],
            fold,
            opts,
            fold_seed,
            fold == 0,
        )?;
        acc.push_split(fold, eval)?;
    }
    Ok(acc.finish(opts.seed))
}

/// Holdout evaluation: train on the training split, early-stop and fit all
/// selection statistics on the validation split, score the test split once.
pub fn run_benchmark(
    records: &[CleanRecord],
    plan: &SplitPlan,
    opts: &CvOptions,
) -> Result<CVReport, PipelineError> {
    assert!(!opts.roster.is_empty(), "roster must not be empty");
    assert!(
        !plan.train.is_empty() && !plan.val.is_empty() && !plan.test.is_empty(),
        "holdout plan must have non-empty train/val/test"
    );
    check_indices(records, &plan.train)?;
    check_indices(records, &plan.val)?;
    check_indices(records, &plan.test)?;

    let fold_seed = derive_seed(opts.seed, 0);
    let mut acc = Accumulator::new(opts, "holdout");
    let eval = evaluate_split(
        records, &plan.train, &plan.val, &plan.test, 0, opts, fold_seed, true,
    )?;
    acc.push_split(0, eval)?;
    Ok(acc.finish(opts.seed))
}
