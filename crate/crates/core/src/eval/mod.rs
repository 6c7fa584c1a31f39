//! Metrics, significance testing, the leakage-audited cross-validation
//! protocol, and gradient saliency.

pub mod cv;
pub mod metrics;
pub mod report;
pub mod saliency;
pub mod wilcoxon;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("targets have zero variance; R\u{b2} is undefined")]
    ZeroVarianceTargets,
    #[error("paired test needs at least 5 nonzero differences, got {got}")]
    TooFewPairs { got: usize },
    #[error("all paired differences are zero")]
    AllZeroDifferences,
}

pub use cv::{
    parse_roster, run_benchmark, run_cv, CvOptions, PipelineError, RosterEntry, STREAM_DNN_BUILD,
    STREAM_FOREST, STREAM_GBT, STREAM_SEARCH, STREAM_SMOTE,
};
pub use metrics::{r2, rmse, MetricPair};
pub use report::{
    saliency_channel_csv, AggregateMetrics, CVReport, EntryReport, FoldAudit, FoldMetrics,
    LabeledSaliency, LeakageAudit, PValueEntry,
};
pub use saliency::{output_input_gradients, saliency, SaliencyReport};
pub use wilcoxon::wilcoxon_one_sided;
