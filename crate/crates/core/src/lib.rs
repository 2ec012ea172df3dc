//! Weak-identification-robust GMM inference.
//!
//! * [`moments`]: moment models, sample moments, covariance and the CUE objective.
//! * [`quasi_bayes`]: quasi-posterior sampling, Bayes decision rules and HPD regions.
//! * [`robust`]: conditional WAP tests and confidence sets by test inversion.
//! * [`limit_lab`]: the finite-parameter Gaussian limit experiment.
//! * [`sim_harness`]: calibrated simulation designs and Bernstein–von Mises checks.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod exec;
pub mod limit_lab;
pub mod linalg;
pub mod moments;
pub mod optim;
pub mod param;
pub mod quasi_bayes;
pub mod rng;
pub mod robust;
pub mod sim_harness;

pub use error::{Error, Result};
