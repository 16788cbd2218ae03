//! Subgroup discovery over binarized patient cohorts.
//!
//! The pipeline mines `X -> Y` rules from a one-hot encoded cohort with
//! beam search over weighted relative accuracy (WRAcc), ranks features
//! by the average WRAcc of the surviving rules containing them, and
//! wraps the whole thing in an experiment protocol: a width-by-length
//! setting grid with 95% CI aggregation, re-run per demographic
//! stratum.
//!
//! Modules map onto the pipeline stages:
//!
//! - [`cohort`]: visit CSV -> labeled, one-hot [`cohort::CohortTable`]
//! - [`rule`]: canonical rules, coverage, WRAcc
//! - [`miner`]: beam engine plus the exhaustive oracle engine
//! - [`importance`]: per-feature average-WRAcc scores and comparisons
//! - [`experiments`]: setting grids, strata, CI aggregation
//! - [`synth`]: seeded synthetic cohorts with planted rules
//! - [`report`]: JSON/CSV emitters and run manifests

pub mod bits;
pub mod cohort;
pub mod error;
pub mod experiments;
pub mod importance;
pub mod miner;
pub mod report;
pub mod rule;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
