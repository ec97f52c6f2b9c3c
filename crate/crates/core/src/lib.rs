//! Shapley-value explanations for Wide-and-Deep PointNet classifiers.
//!
//! The crate is organised around the network being explained and the
//! estimators that explain it:
//!
//! - [`nn`]: deterministic point-cloud + tabular network (the black box `f`).
//! - [`prob`]: the probabilistic twin that propagates random-subset
//!   uncertainty as independent Gaussians.
//! - [`attribution`]: exact enumeration, permutation sampling, occlusion and
//!   the moment-propagation estimator, plus baselines and hull templates.
//! - [`datagen`]: synthetic datasets and the NDJSON dataset format.
//! - [`training`]: backpropagation and a small first-order trainer.
//! - [`evalbench`]: MSE / Spearman / NDCG and the estimator benchmark.
//! - [`verify`]: Monte-Carlo checks of the probabilistic layers.

pub mod attribution;
pub mod datagen;
pub mod error;
pub mod evalbench;
pub mod nn;
pub mod prob;
pub mod rng;
pub mod training;
pub mod verify;

pub use error::{Error, Result};

/// Version string embedded in every report this crate writes.
pub const TOOL_VERSION: &str = concat!("svehnn ", env!("CARGO_PKG_VERSION"));
