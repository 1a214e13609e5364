//! Measure and correct the class-prior bias that training-set weighting or
//! rebalancing puts into probabilistic classifiers.
//!
//! * [`data`]: datasets, priors, probability matrices, balancing weights.
//! * [`simgen`]: Gaussian class simulator with an exact posterior oracle.
//! * [`mlp`]: the feed-forward classifier and its trainer.
//! * [`priors`]: weighted priors, deweighting, and the prediction-consistent
//!   prior solver.
//! * [`classify`]: Bayes and stochastic class assignment.
//! * [`metrics`]: predicted vs observed completeness, reliability and F1,
//!   overshoot, and KL divergence.
//! * [`harness`]: training-size sweeps over model variants with CSV, JSON
//!   and SVG reports.

pub mod classify;
pub mod data;
pub mod error;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod mlp;
pub mod priors;
pub mod rng;
pub mod simgen;

pub use data::{balancing_weights, prior_from_labels, Dataset, Prior, ProbDiagnostics, ProbMatrix};
pub use error::{Error, Result};
