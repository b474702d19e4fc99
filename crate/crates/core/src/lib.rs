//! Online hypothesis testing with test martingales over reduced filtrations.
//!
//! The crate covers three ways of reducing a composite null hypothesis to a
//! simple one and of recovering natural-filtration evidence afterwards:
//!
//! - [`compression`]: online compression models and the conformal p-values
//!   they generate (binary exchangeability, Gaussian with variance 1).
//! - [`pivotal`]: the Gaussian normalizing transformations and a pivotal test
//!   martingale that no element-wise natural test martingale dominates.
//! - [`bk`]: the Bayes–Kelly conformal test martingale against a Bernoulli
//!   changepoint alternative.
//! - [`benchmarks`]: likelihood-ratio benchmarks and finite-horizon
//!   naturalization by backward conditional averaging.
//! - [`harness`]: the changepoint experiment, its CSV records and summaries.
//!
//! [`evidence`] holds the shared value types and the element-wise
//! (infimum over the parameter) combination rule.

pub mod benchmarks;
pub mod bk;
pub mod calibration;
pub mod compression;
mod error;
pub mod evidence;
pub mod gaussian;
pub mod harness;
pub mod pivotal;

pub use error::{Error, Result};
pub use evidence::{
    elementwise_combine, verify_evariable, BinarySequence, CalibrationReport, EvidencePath,
    RandomizationStream, RealSequence, ThetaGrid,
};
