//! Ingestion, cleaning, encoding, and splitting of the pharmacokinetic
//! dataset.
//!
//! The pipeline is: [`load_dataset`] (CSV → raw records, anything
//! unparseable marked missing) → [`clean`] (drop incomplete rows) →
//! [`Encoder`] (one-hot + z-score into the primary feature vector) with
//! [`SplitPlan`] / [`FoldPlan`] deciding which rows may contribute
//! statistics.

mod encode;
mod load;
mod schema;
mod split;

pub use encode::{encode, EncodedSample, Encoder, Standardizer, NUMERIC_DIM, PRIMARY_DIM};
pub use load::load_dataset;
pub use schema::{
    AdminRoute, CancerType, Charge, CleanRecord, Material, NpShape, NpType, SampleRecord,
    Targeting, TargetVector, TumorModel, TARGET_NAMES,
};
pub use split::{make_cv_folds, make_holdout_split, FoldPlan, SplitPlan};

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed CSV in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("dataset file has no header row: {path}")]
    EmptyFile { path: PathBuf },
    #[error("missing required column(s): {missing:?}")]
    MissingColumn { missing: Vec<String> },
    #[error("every row had at least one missing value; nothing to work with")]
    AllRowsDropped,
    #[error("value {value:?} is not in the {field} vocabulary")]
    UnknownCategory { field: &'static str, value: String },
    #[error("split ratios {ratios:?} must be positive and sum to 1")]
    BadRatios { ratios: [f64; 3] },
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("statistics source must be non-empty")]
    EmptyStatsSource,
    #[error("statistics index {index} out of range for {len} records")]
    StatsIndexOutOfRange { index: usize, len: usize },
}

/// A dataset with no missing values plus the provenance of its rows.
#[derive(Debug, Clone)]
pub struct CleanDataset {
    pub records: Vec<CleanRecord>,
    /// Where the records came from (for reports).
    pub source: Option<PathBuf>,
    /// Index of each retained record in the original row order.
    pub retained_rows: Vec<usize>,
    /// How many raw rows were inspected.
    pub loaded_rows: usize,
}

impl CleanDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Drops every record with at least one missing field, preserving order.
///
/// Errors with [`DataError::AllRowsDropped`] when nothing survives, which
/// signals an unusable source rather than a quietly empty dataset.
pub fn clean(records: &[SampleRecord]) -> Result<CleanDataset, DataError> {
    let mut kept = Vec::new();
    let mut retained_rows = Vec::new();
    for (i, r) in records.iter().enumerate() {
        if let Some(c) = CleanRecord::from_sample(r) {
            kept.push(c);
            retained_rows.push(i);
        }
    }
    if kept.is_empty() {
        return Err(DataError::AllRowsDropped);
    }
    Ok(CleanDataset {
        records: kept,
        source: None,
        retained_rows,
        loaded_rows: records.len(),
    })
}
