//! Builds clusters of fact-checked claims from similar-claim pairs and scores
//! clusterings against ground truth.
//!
//! The stages are: approximate nearest-neighbor candidate pairs
//! ([`ann`], [`pairs`]), annotator consensus ([`pairs`]), union-find
//! sub-clusters and centroid-based merging ([`clusters`]), all chained by
//! [`pipeline`]. [`baselines`], [`metrics`] and [`analytics`] cover
//! evaluation; [`io`] holds every file format.

pub mod analytics;
pub mod ann;
pub mod baselines;
pub mod clusters;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod pairs;
pub mod pipeline;
pub mod vecmath;

pub use error::{Error, Result};
