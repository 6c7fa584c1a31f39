//! Serializable result types for cross-validation and holdout benchmarking,
//! with CSV renderings of the metric and saliency tables.

use serde::{Deserialize, Serialize};
use std::collections::HashSet;

use crate::augment::AugmentConfig;
use crate::dataset::TARGET_NAMES;
use crate::ensemble::EnsembleWeights;
use crate::eval::metrics::MetricPair;
use crate::eval::saliency::SaliencyReport;
use crate::models::{ForestConfig, GbtConfig, MultiviewConfig, N_OUTPUTS};

/// Row ids (into the evaluated record list) that each statistic consumed in
/// one fold. The fold passes when nothing except the final evaluation ever
/// touched a held-out row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAudit {
    pub fold: usize,
    pub held_out_rows: Vec<usize>,
    pub inner_train_rows: Vec<usize>,
    pub inner_val_rows: Vec<usize>,
    /// Rows whose values entered any standardization statistic.
    pub standardization_rows: Vec<usize>,
    /// Rows eligible as interpolation sources for synthetic samples.
    pub smote_source_rows: Vec<usize>,
    /// Rows that drove early-stopping decisions.
    pub early_stopping_rows: Vec<usize>,
    /// Rows that drove ensemble weight selection.
    pub ensemble_weight_rows: Vec<usize>,
}

impl FoldAudit {
    pub fn passes(&self) -> bool {
        let held: HashSet<usize> = self.held_out_rows.iter().copied().collect();
        let disjoint = |rows: &[usize]| rows.iter().all(|r| !held.contains(r));
        disjoint(&self.inner_train_rows)
            && disjoint(&self.inner_val_rows)
            && disjoint(&self.standardization_rows)
            && disjoint(&self.smote_source_rows)
            && disjoint(&self.early_stopping_rows)
            && disjoint(&self.ensemble_weight_rows)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakageAudit {
    pub folds: Vec<FoldAudit>,
}

impl LeakageAudit {
    pub fn passes(&self) -> bool {
        self.folds.iter().all(FoldAudit::passes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub test_size: usize,
    /// One pair per output, in target order.
    pub outputs: [MetricPair; N_OUTPUTS],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub output: String,
    pub mean_r2: f64,
    pub std_r2: f64,
    pub mean_rmse: f64,
    pub std_rmse: f64,
}

/// Everything reported for one roster row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryReport {
    pub label: String,
    pub folds: Vec<FoldMetrics>,
    pub aggregate: Vec<AggregateMetrics>,
    /// Inner-validation RMSE per fold per output.
    pub inner_val_rmse: Vec<[f64; N_OUTPUTS]>,
    /// Fitted weights per fold; `None` for single-model rows.
    pub weights: Vec<Option<EnsembleWeights>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValueEntry {
    pub output: String,
    /// The row whose errors are hypothesized smaller.
    pub reference: String,
    /// The best competing row for this output.
    pub alternative: String,
    /// `None` when the test's preconditions fail (e.g. identical errors).
    pub p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSaliency {
    pub label: String,
    pub fold: usize,
    pub report: SaliencyReport,
}

/// Full evaluation report: per-fold and aggregate metrics for every roster
/// row, significance tests, saliency, the audit trail, and enough
/// configuration echo to reproduce the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CVReport {
    /// "cross-validation" or "holdout".
    pub protocol: String,
    pub fold_count: usize,
    pub fold_test_sizes: Vec<usize>,
    pub seed: u64,
    pub budget: usize,
    pub base_config: MultiviewConfig,
    pub forest_config: ForestConfig,
    pub gbt_config: GbtConfig,
    pub augment_config: AugmentConfig,
    pub grid_step: f64,
    /// The network configuration actually used in each fold (after search).
    pub chosen_dnn_configs: Vec<MultiviewConfig>,
    pub entries: Vec<EntryReport>,
    pub p_values: Vec<PValueEntry>,
    pub saliency: Vec<LabeledSaliency>,
    pub audit: LeakageAudit,
}

impl CVReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Long-form metric table: one row per roster entry × fold × output.
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("model,fold,output,r2,rmse\n");
        for entry in &self.entries {
            for fm in &entry.folds {
                for (o, pair) in fm.outputs.iter().enumerate() {
                    out.push_str(&format!(
                        "{},{},{},{},{}\n",
                        entry.label, fm.fold, TARGET_NAMES[o], pair.r2, pair.rmse
                    ));
                }
            }
        }
        out
    }

    /// Aggregate table: one row per roster entry × output.
    pub fn aggregate_csv(&self) -> String {
        let mut out = String::from("model,output,mean_r2,std_r2,mean_rmse,std_rmse\n");
        for entry in &self.entries {
            for agg in &entry.aggregate {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    entry.label, agg.output, agg.mean_r2, agg.std_r2, agg.mean_rmse, agg.std_rmse
                ));
            }
        }
        out
    }
}

/// One saliency channel as CSV: a row per output, a column per input.
pub fn saliency_channel_csv(channel: &[Vec<f64>; N_OUTPUTS], column_names: &[String]) -> String {
    let mut out = String::from("output");
    for name in column_names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (o, row) in channel.iter().enumerate() {
        assert_eq!(row.len(), column_names.len(), "column names must match the channel width");
        out.push_str(TARGET_NAMES[o]);
        for v in row {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn audit_with(held: Vec<usize>, stats: Vec<usize>) -> FoldAudit {
        FoldAudit {
            fold: 0,
            held_out_rows: held,
            inner_train_rows: vec![],
            inner_val_rows: vec![],
            standardization_rows: stats,
            smote_source_rows: vec![],
            early_stopping_rows: vec![],
            ensemble_weight_rows: vec![],
        }
    }

    #[test]
    fn disjoint_row_sets_pass_the_audit() {
        let audit = LeakageAudit { folds: vec![audit_with(vec![0, 1], vec![2, 3, 4])] };
        assert!(audit.passes());
    }

    #[test]
    fn a_held_out_row_in_any_statistic_fails_the_audit() {
        let audit = LeakageAudit { folds: vec![audit_with(vec![0, 1], vec![1, 2])] };
        assert!(!audit.passes());
        let mut fold = audit_with(vec![5], vec![]);
        fold.ensemble_weight_rows = vec![5];
        assert!(!fold.passes());
        let mut fold = audit_with(vec![7], vec![]);
        fold.early_stopping_rows = vec![7];
        assert!(!fold.passes());
        let mut fold = audit_with(vec![9], vec![]);
        fold.smote_source_rows = vec![9];
        assert!(!fold.passes());
    }

    #[test]
    fn saliency_csv_has_one_column_per_input_and_one_row_per_output() {
        let channel: [Vec<f64>; 4] =
            [vec![1.0, 0.5], vec![0.25, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]];
        let names = vec!["a".to_string(), "b".to_string()];
        let csv = saliency_channel_csv(&channel, &names);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[0], "output,a,b");
        assert_eq!(lines[1], "KTRESmax,1,0.5");
        assert_eq!(lines[4], "KTRESrelease,1,0");
    }
}
