//! Maximum likelihood estimation of the drift `theta` in `X_t = theta t + B_t`,
//! where `B` is centered Gaussian with stationary increments.
//!
//! Two observation schemes are supported:
//!
//! * [`discrete`]: observations on a grid, estimator
//!   `z' G^-1 dX / z' G^-1 z` with `G` the increment covariance (Toeplitz on
//!   a regular grid, see [`toeplitz`]);
//! * [`continuous`]: a densely observed path, estimator
//!   `int h dX / int h dt` where the weight `h` solves `Gamma_T h = 1`.
//!
//! [`sim`] draws exact sample paths and [`experiment`] runs Monte Carlo studies
//! on top of both. Every numerical type is generic over [`Real`]; the `f64`
//! aliases below are what applications normally use.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod continuous;
pub mod discrete;
pub mod error;
pub mod experiment;
pub mod models;
pub mod scalar;
pub mod sim;
pub mod stats;
pub mod toeplitz;

pub use error::{Error, ErrorClass, Result};
pub use scalar::Real;

pub type Model = models::CovarianceModel<f64>;
pub type Autocov = models::IncrementAutocov<f64>;
pub type Toeplitz = toeplitz::SymToeplitz<f64>;
pub type Path = discrete::SamplePath<f64>;
pub type Report = discrete::EstimateReport<f64>;
pub type Weight = continuous::WeightFunction<f64>;
pub type Config = sim::SimConfig<f64>;

pub type Model32 = models::CovarianceModel<f32>;
pub type Path32 = discrete::SamplePath<f32>;
