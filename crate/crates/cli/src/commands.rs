//! Command implementations. Every command computes its full output in
//! memory first and only then touches the output directory, so a failing
//! run leaves no partial files behind.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use nanopk::augment::{augment_records, AugmentConfig};
use nanopk::checkpoint::{
    boosters_to_bytes, forests_to_bytes, load_network, network_to_bytes, NetworkBundle,
};
use nanopk::dataset::{
    clean, load_dataset, make_cv_folds, make_holdout_split, CleanDataset, CleanRecord, Encoder,
    Standardizer, TARGET_NAMES,
};
use nanopk::ensemble::{ensemble_predict, fit_weights, EnsembleWeights};
use nanopk::eval::{
    r2, rmse, run_benchmark, run_cv, saliency_channel_csv, CVReport, STREAM_DNN_BUILD,
    STREAM_FOREST, STREAM_GBT, STREAM_SEARCH, STREAM_SMOTE,
};
use nanopk::eval::saliency::saliency;
use nanopk::featmap::{extract_secondary, SECONDARY_COLUMNS};
use nanopk::models::{
    build_multiview, derive_seed, fit_forest, fit_gbt, hyperparameter_search, predict_forest,
    predict_gbt, predict_multiview, train_dnn, Booster, Forest, ForestConfig, GbtConfig,
    MultiviewConfig, MultiviewModel, Variant, N_OUTPUTS,
};
use nanopk::synth::{generate, to_csv};

use crate::config::Settings;
use crate::error::CliError;

/// Staged output files: nothing is written until `commit`.
pub struct Outputs {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Self {
        Outputs { dir: dir.to_path_buf(), files: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.into(), bytes.into()));
    }

    /// Creates the directory and writes every staged file via a rename, so
    /// a crash mid-write cannot leave a half-written report.
    pub fn commit(self) -> Result<Vec<PathBuf>, CliError> {
        std::fs::create_dir_all(&self.dir)?;
        let mut written = Vec::with_capacity(self.files.len());
        for (name, bytes) in self.files {
            let path = self.dir.join(&name);
            let tmp = self.dir.join(format!("{name}.tmp"));
            std::fs::write(&tmp, &bytes)?;
            std::fs::rename(&tmp, &path)?;
            written.push(path);
        }
        Ok(written)
    }
}

fn load_clean(path: &Path) -> Result<CleanDataset, CliError> {
    let raw = load_dataset(path)?;
    let mut ds = clean(&raw)?;
    ds.source = Some(path.to_path_buf());
    Ok(ds)
}

fn announce(written: &[PathBuf]) {
    for p in written {
        println!("wrote {}", p.display());
    }
}

const NUMERIC_LABELS: [&str; 6] = ["HD", "ZP", "TW", "TSiz", "Dose", "BW"];

pub fn cmd_ingest(settings: &Settings, dataset: Option<PathBuf>) -> Result<(), CliError> {
    let path = settings.dataset_path(dataset)?;
    let ds = load_clean(&path)?;
    println!("{} loaded, {} retained", ds.loaded_rows, ds.len());

    println!("numeric ranges (retained rows):");
    for (j, label) in NUMERIC_LABELS.iter().enumerate() {
        let values = ds.records.iter().map(|r| r.numeric_features()[j]);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        println!("  {label:<14} {lo} .. {hi}");
    }
    println!("target ranges:");
    for (o, name) in TARGET_NAMES.iter().enumerate() {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for r in &ds.records {
            let v = r.targets().y[o];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        println!("  {name:<14} {lo} .. {hi}");
    }
    Ok(())
}

pub fn cmd_features(settings: &Settings, dataset: Option<PathBuf>) -> Result<(), CliError> {
    let path = settings.dataset_path(dataset)?;
    let ds = load_clean(&path)?;
    let mut csv = String::from("row");
    for name in SECONDARY_COLUMNS {
        csv.push(',');
        csv.push_str(name);
    }
    csv.push('\n');
    for (rec, &orig) in ds.records.iter().zip(&ds.retained_rows) {
        let feats = extract_secondary(rec, &settings.opts.criteria)?;
        write!(csv, "{orig}").unwrap();
        for v in feats.to_vec() {
            write!(csv, ",{v}").unwrap();
        }
        csv.push('\n');
    }
    let mut out = Outputs::new(&settings.out);
    out.add("features.csv", csv);
    announce(&out.commit()?);
    Ok(())
}

pub fn cmd_synth(settings: &Settings) -> Result<(), CliError> {
    let records = generate(&settings.synth);
    let mut out = Outputs::new(&settings.out);
    out.add("synthetic.csv", to_csv(&records));
    let written = out.commit()?;
    println!("generated {} rows (noise {})", records.len(), settings.synth.noise_sd_fraction);
    announce(&written);
    Ok(())
}

/// Per-output metric pair for the train report.
#[derive(Serialize)]
struct MetricRow {
    output: &'static str,
    r2: f64,
    rmse: f64,
}

#[derive(Serialize)]
struct ModelMetrics {
    model: String,
    validation: Vec<MetricRow>,
    test: Vec<MetricRow>,
}

#[derive(Serialize)]
struct TrainReport {
    dataset: String,
    seed: u64,
    budget: usize,
    split_sizes: [usize; 3],
    network_config: MultiviewConfig,
    forest_config: ForestConfig,
    gbt_config: GbtConfig,
    augment_config: AugmentConfig,
    ensemble_weights: EnsembleWeights,
    metrics: Vec<ModelMetrics>,
}

fn metric_rows(y: &[[f64; N_OUTPUTS]], preds: &[[f64; N_OUTPUTS]]) -> Result<Vec<MetricRow>, CliError> {
    let mut rows = Vec::with_capacity(N_OUTPUTS);
    for o in 0..N_OUTPUTS {
        let yo: Vec<f64> = y.iter().map(|r| r[o]).collect();
        let po: Vec<f64> = preds.iter().map(|r| r[o]).collect();
        rows.push(MetricRow { output: TARGET_NAMES[o], r2: r2(&yo, &po)?, rmse: rmse(&yo, &po) });
    }
    Ok(rows)
}

fn concat_views(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .zip(b)
        .map(|(x, xt)| x.iter().chain(xt.iter()).copied().collect())
        .collect()
}

/// Trains the deployed configuration (network + forest + booster and their
/// validation-weighted ensemble) on the holdout split and saves all three
/// checkpoints. Seeds are derived exactly as in the benchmark command, so
/// the saved network is bit-identical to the one `benchmark` evaluates for
/// the same configuration and seed.
pub fn cmd_train(settings: &Settings, dataset: Option<PathBuf>) -> Result<(), CliError> {
    let path = settings.dataset_path(dataset)?;
    let ds = load_clean(&path)?;
    let opts = &settings.opts;
    let plan = make_holdout_split(ds.len(), settings.ratios, settings.seed)?;
    let fold_seed = derive_seed(opts.seed, 0);

    // Augmentation and all standardization statistics use training rows only.
    let train_recs: Vec<CleanRecord> = plan.train.iter().map(|&i| ds.records[i].clone()).collect();
    let aug_cfg = AugmentConfig { seed: derive_seed(fold_seed, STREAM_SMOTE), ..opts.augment };
    let (aug_recs, _origins, _) = augment_records(&train_recs, &aug_cfg);
    let encoder = Encoder::fit(&aug_recs)?;
    let sec_raw: Vec<Vec<f64>> = aug_recs
        .iter()
        .map(|r| extract_secondary(r, &opts.criteria).map(|s| s.to_vec()))
        .collect::<Result<_, _>>()?;
    let sec_std = Standardizer::fit(&sec_raw)?;

    let x_train: Vec<Vec<f64>> =
        encoder.transform_all(&aug_recs).into_iter().map(|s| s.x).collect();
    let xt_train = sec_std.transform(&sec_raw);
    let y_train: Vec<[f64; N_OUTPUTS]> = aug_recs.iter().map(|r| r.targets().y).collect();
    let (dp, dsec) = (x_train[0].len(), xt_train[0].len());

    let views_for = |ids: &[usize]| -> Result<
        (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<[f64; N_OUTPUTS]>),
        CliError,
    > {
        let mut xs = Vec::with_capacity(ids.len());
        let mut xts = Vec::with_capacity(ids.len());
        let mut ys = Vec::with_capacity(ids.len());
        for &i in ids {
            let rec = &ds.records[i];
            xs.push(encoder.transform(rec).x);
            xts.push(sec_std.transform_row(&extract_secondary(rec, &opts.criteria)?.to_vec()));
            ys.push(rec.targets().y);
        }
        Ok((xs, xts, ys))
    };
    let (x_val, xt_val, y_val) = views_for(&plan.val)?;
    let (x_test, xt_test, y_test) = views_for(&plan.test)?;

    let cfg0 = MultiviewConfig {
        variant: Variant::Full,
        seed: derive_seed(fold_seed, STREAM_DNN_BUILD),
        ..opts.base_config.clone()
    };
    let (model, used_cfg): (MultiviewModel, MultiviewConfig) = if opts.budget >= 1 {
        let outcome = hyperparameter_search(
            &opts.search_space,
            opts.budget,
            derive_seed(fold_seed, STREAM_SEARCH),
            &cfg0,
            dp,
            dsec,
            &x_train,
            &xt_train,
            &y_train,
            &x_val,
            &xt_val,
            &y_val,
        )?;
        (outcome.best_model, outcome.best_config)
    } else {
        let mut m = build_multiview(&cfg0, dp, dsec)?;
        train_dnn(&mut m, &x_train, &xt_train, &y_train, &x_val, &xt_val, &y_val)?;
        (m, cfg0)
    };

    let tree_train = concat_views(&x_train, &xt_train);
    let tree_val = concat_views(&x_val, &xt_val);
    let tree_test = concat_views(&x_test, &xt_test);
    let forests: [Forest; N_OUTPUTS] = std::array::from_fn(|o| {
        let cfg = ForestConfig {
            seed: derive_seed(fold_seed, STREAM_FOREST + o as u64),
            ..opts.forest.clone()
        };
        let yo: Vec<f64> = y_train.iter().map(|r| r[o]).collect();
        fit_forest(&tree_train, &yo, &cfg)
    });
    let boosters: [Booster; N_OUTPUTS] = std::array::from_fn(|o| {
        let cfg = GbtConfig {
            seed: derive_seed(fold_seed, STREAM_GBT + o as u64),
            ..opts.gbt.clone()
        };
        let yo: Vec<f64> = y_train.iter().map(|r| r[o]).collect();
        fit_gbt(&tree_train, &yo, &cfg)
    });

    let tree_preds = |models_forest: &[Forest; N_OUTPUTS],
                      models_gbt: &[Booster; N_OUTPUTS],
                      rows: &[Vec<f64>]|
     -> (Vec<[f64; N_OUTPUTS]>, Vec<[f64; N_OUTPUTS]>) {
        let mut forest_rows = vec![[0.0; N_OUTPUTS]; rows.len()];
        let mut gbt_rows = vec![[0.0; N_OUTPUTS]; rows.len()];
        for o in 0..N_OUTPUTS {
            for (i, v) in predict_forest(&models_forest[o], rows).into_iter().enumerate() {
                forest_rows[i][o] = v;
            }
            for (i, v) in predict_gbt(&models_gbt[o], rows).into_iter().enumerate() {
                gbt_rows[i][o] = v;
            }
        }
        (forest_rows, gbt_rows)
    };
    let dnn_val = predict_multiview(&model, &x_val, &xt_val)?;
    let dnn_test = predict_multiview(&model, &x_test, &xt_test)?;
    let (forest_val, gbt_val) = tree_preds(&forests, &boosters, &tree_val);
    let (forest_test, gbt_test) = tree_preds(&forests, &boosters, &tree_test);

    // Member order mirrors the report labels: network, booster, forest.
    let members_val = [dnn_val.clone(), gbt_val.clone(), forest_val.clone()];
    let weights = fit_weights(&members_val, &y_val, opts.grid_step)?;
    let ens_test = ensemble_predict(
        &[dnn_test.clone(), gbt_test.clone(), forest_test.clone()],
        &weights,
    )?;

    let metrics = vec![
        ModelMetrics {
            model: "DNN".to_string(),
            validation: metric_rows(&y_val, &dnn_val)?,
            test: metric_rows(&y_test, &dnn_test)?,
        },
        ModelMetrics {
            model: "XGB".to_string(),
            validation: metric_rows(&y_val, &gbt_val)?,
            test: metric_rows(&y_test, &gbt_test)?,
        },
        ModelMetrics {
            model: "RF".to_string(),
            validation: metric_rows(&y_val, &forest_val)?,
            test: metric_rows(&y_test, &forest_test)?,
        },
        ModelMetrics {
            model: "DNN+XGB+RF".to_string(),
            validation: metric_rows(&y_val, &ensemble_predict(&members_val, &weights)?)?,
            test: metric_rows(&y_test, &ens_test)?,
        },
    ];

    let report = TrainReport {
        dataset: path.display().to_string(),
        seed: settings.seed,
        budget: opts.budget,
        split_sizes: [plan.train.len(), plan.val.len(), plan.test.len()],
        network_config: used_cfg,
        forest_config: opts.forest.clone(),
        gbt_config: opts.gbt.clone(),
        augment_config: aug_cfg,
        ensemble_weights: weights,
        metrics,
    };

    let bundle = NetworkBundle {
        model,
        encoder,
        secondary: sec_std,
        criteria: opts.criteria.clone(),
    };
    let mut out = Outputs::new(&settings.out);
    out.add("dnn.ckpt", network_to_bytes(&bundle));
    out.add("forest.json", forests_to_bytes(&forests));
    out.add("gbt.json", boosters_to_bytes(&boosters));
    out.add(
        "train_report.json",
        serde_json::to_vec_pretty(&report).expect("report serializes"),
    );
    let written = out.commit()?;
    println!(
        "trained on {} rows, validated on {}, tested on {}",
        plan.train.len(),
        plan.val.len(),
        plan.test.len()
    );
    for m in &report.metrics {
        let r2s: Vec<String> = m.test.iter().map(|row| format!("{:.3}", row.r2)).collect();
        println!("  {:<12} test R\u{b2} {}", m.model, r2s.join(" "));
    }
    announce(&written);
    Ok(())
}

fn primary_column_names(records: &[CleanRecord]) -> Result<Vec<String>, CliError> {
    // The column table is schema-fixed; any fitted encoder exposes it.
    Ok(Encoder::fit(&records[..1.max(1)])?.columns().to_vec())
}

fn stage_report(
    out: &mut Outputs,
    stem: &str,
    report: &CVReport,
    records: &[CleanRecord],
) -> Result<(), CliError> {
    out.add(format!("{stem}_report.json"), report.to_json());
    out.add(format!("{stem}_metrics.csv"), report.metrics_csv());
    out.add(format!("{stem}_aggregate.csv"), report.aggregate_csv());
    let primary_cols = primary_column_names(records)?;
    let secondary_cols: Vec<String> = SECONDARY_COLUMNS.iter().map(|s| s.to_string()).collect();
    for ls in &report.saliency {
        let slug: String = ls
            .label
            .to_ascii_lowercase()
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() { c } else { '-' })
            .collect();
        out.add(
            format!("saliency_{slug}_primary.csv"),
            saliency_channel_csv(&ls.report.primary, &primary_cols),
        );
        out.add(
            format!("saliency_{slug}_secondary.csv"),
            saliency_channel_csv(&ls.report.secondary, &secondary_cols),
        );
    }
    Ok(())
}

fn print_report_summary(report: &CVReport) {
    println!(
        "{} over {} fold(s), seed {}, budget {}",
        report.protocol, report.fold_count, report.seed, report.budget
    );
    for entry in &report.entries {
        let r2s: Vec<String> =
            entry.aggregate.iter().map(|a| format!("{:.3}", a.mean_r2)).collect();
        println!("  {:<14} mean R\u{b2} {}", entry.label, r2s.join(" "));
    }
    for pv in &report.p_values {
        match pv.p {
            Some(p) => println!(
                "  {}: {} vs {} one-sided p = {:.5}",
                pv.output, pv.reference, pv.alternative, p
            ),
            None => println!(
                "  {}: {} vs {} (test undefined for these errors)",
                pv.output, pv.reference, pv.alternative
            ),
        }
    }
}

pub fn cmd_cv(settings: &Settings, dataset: Option<PathBuf>) -> Result<(), CliError> {
    let path = settings.dataset_path(dataset)?;
    let ds = load_clean(&path)?;
    let plan = make_cv_folds(ds.len(), settings.folds, settings.seed)?;
    let report = run_cv(&ds.records, &plan, &settings.opts)?;
    let mut out = Outputs::new(&settings.out);
    stage_report(&mut out, "cv", &report, &ds.records)?;
    let written = out.commit()?;
    print_report_summary(&report);
    announce(&written);
    Ok(())
}

pub fn cmd_benchmark(settings: &Settings, dataset: Option<PathBuf>) -> Result<(), CliError> {
    let path = settings.dataset_path(dataset)?;
    let ds = load_clean(&path)?;
    let plan = make_holdout_split(ds.len(), settings.ratios, settings.seed)?;
    let report = run_benchmark(&ds.records, &plan, &settings.opts)?;
    let mut out = Outputs::new(&settings.out);
    stage_report(&mut out, "benchmark", &report, &ds.records)?;
    let written = out.commit()?;
    print_report_summary(&report);
    announce(&written);
    Ok(())
}

pub fn cmd_saliency(
    settings: &Settings,
    checkpoint: &Path,
    dataset: Option<PathBuf>,
) -> Result<(), CliError> {
    let bundle = load_network(checkpoint)?;
    let path = settings.dataset_path(dataset)?;
    let ds = load_clean(&path)?;

    let mut xs = Vec::with_capacity(ds.len());
    let mut xts = Vec::with_capacity(ds.len());
    for rec in &ds.records {
        xs.push(bundle.encoder.transform(rec).x);
        xts.push(
            bundle
                .secondary
                .transform_row(&extract_secondary(rec, &bundle.criteria)?.to_vec()),
        );
    }
    let report = saliency(&bundle.model, &xs, &xts)?;

    let degenerate = report
        .primary
        .iter()
        .chain(report.secondary.iter())
        .all(|row| row.iter().all(|v| *v == 0.0));
    if degenerate {
        eprintln!(
            "warning: saliency is identically zero; the checkpoint looks untrained or degenerate"
        );
    }

    let primary_cols: Vec<String> = bundle.encoder.columns().to_vec();
    let secondary_cols: Vec<String> = SECONDARY_COLUMNS.iter().map(|s| s.to_string()).collect();
    let mut out = Outputs::new(&settings.out);
    out.add("saliency_primary.csv", saliency_channel_csv(&report.primary, &primary_cols));
    out.add("saliency_secondary.csv", saliency_channel_csv(&report.secondary, &secondary_cols));
    announce(&out.commit()?);
    Ok(())
}
