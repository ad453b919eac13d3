//! Online variational Bayesian identification of polynomial NARMAX systems.
//!
//! The estimator keeps a Gaussian belief over the basis coefficients and a
//! Gamma belief over the noise precision. Every observation triggers a short
//! coordinate-descent loop over the two mean-field factors, after which the
//! posterior becomes the prior for the next sample.
//!
//! Module map:
//!
//! * [`beliefs`]: Gaussian (information form) and Gamma beliefs.
//! * [`basis`]: monomial enumeration, delay buffers and regressor expansion.
//! * [`vmp`]: the recursive message-passing estimator and its free energy.
//! * [`predict`]: posterior predictive, one-step runs and free-run simulation.
//! * [`baselines`]: recursive and iterative least-squares estimators.
//! * [`datagen`]: multisine inputs and pseudo-random benchmark systems.
//! * [`harness`]: sample-size and noise sweeps with RMS aggregation.
//! * [`io`] and [`plot`]: CSV/JSON formats and SVG figures.

pub mod baselines;
pub mod basis;
pub mod beliefs;
pub mod datagen;
mod error;
pub mod harness;
pub mod io;
pub mod plot;
pub mod predict;
pub mod vmp;

pub use error::{Error, Result};
