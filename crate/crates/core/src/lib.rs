//! Certification of classifiers and classifier ensembles by randomized
//! smoothing.
//!
//! * [`bounds`]: Clopper-Pearson limits, Gaussian CDF/quantile, radii.
//! * [`classifiers`]: the base-classifier trait, analytic oracle
//!   classifiers and the counter-based Gaussian noise stream.
//! * [`ensemble`]: soft/hard/softmax/weighted voting with K-consensus.
//! * [`certify`]: fixed-budget and staged adaptive certification, batch
//!   metrics and report serialization.
//! * [`theory`]: the Gaussian logit-margin model of ensemble variance
//!   reduction.

pub mod bounds;
pub mod certify;
pub mod classifiers;
pub mod ensemble;
pub mod error;
pub mod theory;

pub use error::{Error, Result};
