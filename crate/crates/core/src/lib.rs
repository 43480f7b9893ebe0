//! Neural estimation of individual dose-response curves.
//!
//! The crate covers the full experimental loop for learning the response of a
//! unit to several treatments, each applied at a continuous dosage, from
//! observational data:
//!
//! - [`nn`]: a small dense network engine (forward/backward, inverted
//!   dropout, Adam).
//! - [`model`]: the hierarchical dose-response network (shared base layers,
//!   per-treatment layers, per-dosage-stratum heads) plus the TARNET and MLP
//!   baselines expressed in the same engine.
//! - [`regularizers`]: treatment-assignment-bias schemes (Sinkhorn
//!   distribution matching, propensity dropout, batch and dataset matching).
//! - [`data`]: semi-synthetic benchmark generators that retain a closed-form
//!   ground-truth oracle, plus CSV covariate ingestion.
//! - [`metrics`]: MISE, dosage policy error, policy error, and the
//!   nearest-neighbour MISE used for model selection.
//! - [`knn`]: a k-nearest-neighbour counterfactual regression baseline.
//! - [`harness`]: seeded random hyperparameter search and experiment drivers.

pub mod data;
pub mod error;
pub mod harness;
pub mod knn;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod regularizers;

pub use error::{Error, Result};
