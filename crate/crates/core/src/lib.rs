//! Prediction of tumor-delivery kinetics for nanoparticle formulations:
//! data ingestion, mechanistic feature maps, augmentation, a self-contained
//! reverse-mode autodiff engine, neural and tree learners, ensembling, and
//! leakage-audited cross-validated evaluation.

pub mod augment;
pub mod autodiff;
pub mod checkpoint;
pub mod dataset;
pub mod ensemble;
pub mod eval;
pub mod featmap;
pub mod models;
pub mod priors;
pub mod synth;

pub use autodiff::AdError;
pub use checkpoint::CheckpointError;
pub use dataset::DataError;
pub use ensemble::EnsembleError;
pub use eval::{EvalError, PipelineError};
pub use featmap::FeatError;
pub use models::ModelError;
