//! Backbone-agnostic out-of-distribution scoring over pre-extracted embeddings.
//!
//! Everything here is pure computation on in-memory matrices: fitting the
//! shared-covariance Gaussian, softmax-derived confidences, few-shot outlier
//! exposure heads, zero-shot candidate-label scoring and threshold-free
//! detection metrics. File formats, the CLI and the benchmark service live in
//! the `oodkit` crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod embedding;
mod error;
pub mod linalg;
pub mod maha;
pub mod metrics;
pub mod oe;
pub mod probs;
pub mod zshot;

pub use crate::embedding::{ClassPartition, EmbeddingSet, PartitionMode};
pub use crate::error::{Error, Result};
pub use crate::maha::GaussianModel;
pub use crate::metrics::ScoreSet;
pub use crate::oe::{HeadKind, OeConfig, OeHead};
pub use crate::probs::LogitSet;
pub use crate::zshot::CandidateLabels;
