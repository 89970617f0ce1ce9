//! Nonparametric subset scanning for anomalous patterns in neural
//! activation matrices.
//!
//! The pipeline: background and test activations ([`matrix`]) are turned
//! into empirical p-values ([`pvalue`]), the most anomalous submatrix is
//! found by maximizing the Berk-Jones scan statistic ([`scan`]), and
//! detection power is measured on labeled pools ([`eval`], [`pca`]).
//! [`synth`] plants known anomalies for end-to-end checks.

pub mod error;
pub mod eval;
pub mod matrix;
pub mod pca;
pub mod pvalue;
pub mod rng;
pub mod scan;
pub mod synth;

pub use error::{Error, Result};
pub use matrix::{ActivationMatrix, PValueMatrix};
pub use scan::{ScanConfig, ScanResult, Subset};
