//! Detection of stationary social interactions and group formations from
//! multi-modal mobile-sensing logs.
//!
//! The pipeline: ingest per-participant beacon/motion logs, preprocess them
//! into gap-free per-second signals, compute pairwise features, classify
//! pair interaction per second with gradient-boosted trees, turn the
//! per-second pair probabilities into weighted graphs and recover group
//! formations with modularity-based community detection. A synthetic crowd
//! simulator generates complete sessions with planted ground truth so the
//! whole chain can be exercised without real recordings.
//!
//! Numeric kernels are generic over [`num::Real`] (`f32` or `f64`); the
//! pipeline itself runs on [`Scalar`].

pub mod community;
pub mod config;
pub mod error;
pub mod eval;
pub mod features;
pub mod gbdt;
pub mod io;
pub mod model;
pub mod num;
pub mod pipeline;
pub mod preprocess;
pub mod proximity;
pub mod report;
pub mod sim;

pub use error::{Error, Result};

/// Scalar type the pipeline runs on.
pub type Scalar = f64;

/// Path-loss parameters at pipeline precision.
pub type PlmParams = proximity::PlmParams<Scalar>;
