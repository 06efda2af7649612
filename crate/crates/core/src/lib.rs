//! Typical-set goodness-of-fit testing with ensembles of learned Gaussian
//! mixture densities.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is pure given its
//! inputs and a 64-bit seed; file formats, the experiment driver and the CLI
//! live in the `multitypical` companion crate.
//!
//! Module map:
//!
//! * [`mixture`] diagonal-covariance Gaussian mixtures: evaluation, sampling,
//!   random base distributions.
//! * [`estimate`] Monte-Carlo entropy / KL estimators and their closed-form
//!   single-Gaussian oracles.
//! * [`training`] maximum-likelihood fitting (EM, gradient ascent, Adam).
//! * [`typicality`] typical-set scoring, epsilon calibration, error rates.
//! * [`ensemble`] multi-typical sets, rejection sampling, intersection
//!   matrices and the min-typicality density.
//! * [`bounds`] error-rate bound and intersection-condition evaluators with
//!   low-dimensional Monte-Carlo and grid validators.
#![no_std]

extern crate alloc;

pub mod bounds;
pub mod ensemble;
mod error;
pub mod estimate;
pub mod math;
pub mod mixture;
pub mod rng;
pub mod training;
pub mod typicality;

pub use error::{Error, Result};
pub use estimate::{EntropyEstimate, KlEstimate};
pub use mixture::{GaussianComponent, MixtureModel, SampleBatch};
