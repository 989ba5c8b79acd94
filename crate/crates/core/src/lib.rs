//! Camera-trap detection pipeline toolkit: dataset ingestion, stratified
//! cross-validation splits, detection evaluation and training diagnostics.

pub mod dataset;
pub mod diagnostics;
pub mod error;
pub mod evaluator;
pub mod geometry;
pub mod report;
pub mod splitter;

pub use error::{Error, Result};
