//! Degree distributions of k-connected AB random geometric graphs.
//!
//! Every A-point (user) connects to its `k` nearest B-points (stations). The
//! degree of a station is the number of A-points falling inside its
//! order-`<= k` Voronoi region, so the degree law is a Poisson mixture over
//! the area of that region. This crate provides:
//!
//! - [`geometry`]: domains, the torus metric and B-point layouts,
//! - [`knn`]: exact ordered k-nearest-neighbour queries (optionally shadowed),
//! - [`areas`]: higher-order Voronoi areas by lattice sampling (2D) or exactly (1D),
//! - [`analytic`]: closed-form degree and area laws and their coefficients of variation,
//! - [`fitting`]: one-parameter gamma fits of normalized area samples,
//! - [`experiment`]: seeded Monte Carlo degree experiments,
//! - [`dataio`]: station ingestion and all file formats.

pub mod analytic;
pub mod areas;
pub mod dataio;
mod error;
pub mod experiment;
pub mod fitting;
pub mod geometry;
pub mod knn;
pub mod rng;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
