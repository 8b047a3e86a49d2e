//! Spatial risk measures for extreme-value random fields.
//!
//! The library computes the variance-based risk measure of the normalized
//! aggregate damage over a planar region, for three dependence classes with
//! unit Fréchet margins: max-stable fields (Smith, extremal Gaussian, and
//! its disk-truncated variant), their inverted counterparts, and
//! max-mixtures of the two. Deterministic evaluation goes through the
//! Hoeffding covariance identity and adaptive quadrature; a closed 1-D
//! reduction exists for the truncated extremal Gaussian model. A grid
//! simulator with reproducible parallel substreams provides the Monte
//! Carlo route and the empirical dependence diagnostics.

pub mod correlation;
pub mod error;
pub mod geometry;
pub mod models;
pub mod quadrature;
pub mod risk;
pub mod simulation;
pub mod special;

pub use error::{Error, Result};
