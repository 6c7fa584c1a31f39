//! Minimal reverse-mode automatic differentiation engine.
//!
//! A [`Tape`] records an eager forward pass as an append-only list of
//! operations; [`Tape::backward`] replays them in reverse to accumulate
//! gradients. Parameters live in a [`ParamStore`] keyed by name so
//! optimizers and checkpoints can address them stably.

pub mod check;
pub mod optim;
pub mod params;
pub mod tape;
pub mod tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AdError {
    #[error("shape mismatch: {context}")]
    ShapeMismatch { context: String },
    #[error("batch normalization needs at least 2 rows, got {got}")]
    BatchTooSmall { got: usize },
    #[error("dropout rate {rate} outside [0, 1)")]
    BadRate { rate: f64 },
    #[error("non-finite loss produced by {at}")]
    NonFiniteLoss { at: String },
    /// The tape is append-only and operations may only reference earlier
    /// nodes, so cycles cannot be constructed through the public API. The
    /// variant exists so graph validation failures have a stable name if an
    /// internal invariant is ever broken.
    #[error("operation graph contains a cycle")]
    GraphCycle,
}

pub use check::{gradient_check, CheckReport};
pub use optim::{Grads, OptKind, Optimizer};
pub use params::{l2_penalty, ParamEntry, ParamStore};
pub use tape::{Tape, Var};
pub use tensor::{gemm, matmul, Tensor};
