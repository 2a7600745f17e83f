//! Embedding file formats, parallel scoring, reports, the `oodkit` command
//! line and the human-benchmark HTTP service, built on [`oodkit_core`].

pub mod bench;
pub mod cli;
mod error;
pub mod format;
pub mod parallel;
pub mod pca;
pub mod report;

pub use error::{CoreContext, Error, Result};
pub use oodkit_core as core;
