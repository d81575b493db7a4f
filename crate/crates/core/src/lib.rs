//! Shapley-value data valuation for binary classifiers.
//!
//! Training points are players in a cooperative game whose value `V(S)` is
//! the test-set score of a logistic regression fitted on coalition `S`.
//! The crate computes each point's Shapley value exactly (small training
//! sets) or by permutation sampling, under accuracy, recall or specificity,
//! and uses the resulting rankings to find injected label noise.
//!
//! ```
//! use dataval::harness::{synth_gaussian, SynthConfig};
//! use dataval::metrics::MetricKind;
//! use dataval::model::TrainConfig;
//! use dataval::shapley::{efficiency_gap, exact_shapley, grand_and_empty};
//!
//! let cfg = SynthConfig { n_positive: 2, n_negative: 4, dim: 2, ..SynthConfig::default() };
//! let (train, test) = synth_gaussian(&cfg)?;
//! let train_cfg = TrainConfig::default();
//! let sv = exact_shapley(&train, &test, MetricKind::Accuracy, &train_cfg)?;
//! let (full, empty) = grand_and_empty(&train, &test, MetricKind::Accuracy, &train_cfg)?;
//! assert!(efficiency_gap(&sv, full, empty).abs() < 1e-9);
//! # Ok::<(), dataval::Error>(())
//! ```
//!
//! The guide under `book/` walks through the concepts; its code listings are
//! compiled and run as doc-tests of this crate.

pub mod cli;
pub mod data;
mod error;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod model;
pub mod shapley;

pub use error::{Error, ErrorClass, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/shapley.md")]
    mod shapley {}
    #[doc = include_str!("../../../book/src/utility.md")]
    mod utility {}
    #[doc = include_str!("../../../book/src/sampling.md")]
    mod sampling {}
    #[doc = include_str!("../../../book/src/noise.md")]
    mod noise {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
