//! Streaming nonparametric regression with online uncertainty
//! quantification.
//!
//! The crate implements a one-pass kernel regression estimator (functional
//! stochastic gradient descent with Polyak averaging over a truncated Mercer
//! kernel), a multiplier-bootstrap ensemble that runs in lockstep with the
//! data stream, pointwise confidence intervals and simultaneous confidence
//! bands built from the ensemble, a closed-form theory oracle for the
//! leading bias and variance of the averaged estimator, an offline
//! kernel-ridge baseline with residual-bootstrap intervals, and a simulation
//! harness for coverage and timing experiments.

pub mod bootstrap;
pub mod cli;
pub mod error;
pub mod inference;
pub mod kernel;
pub mod offline;
pub mod oracle;
pub mod rng;
pub mod sgd;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
pub use kernel::MercerBasisSpec;
pub use sgd::{SgdTrajectory, StepSchedule};
