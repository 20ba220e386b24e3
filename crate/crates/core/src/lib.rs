// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bessel;
pub mod config;
pub mod cubic;
pub mod effective;
pub mod error;
pub mod gaussinfo;
pub mod linalg;
pub mod linearized;
pub mod meanfield;
pub mod observables;
pub mod params;
pub mod ode;
pub mod scalar;
pub mod spectra;
pub mod stability;

pub use error::{Error, Result};
pub use scalar::{Complex, Real};

pub use params::{Mirror, Topology};

pub type PhysicalParams64 = params::PhysicalParams<f64>;
pub type ModelParams64 = params::ModelParams<f64>;
pub type MeanFieldState64 = meanfield::MeanFieldState<f64>;
pub type CovarianceState64 = linearized::CovarianceState<f64>;
pub type Spectrum64 = spectra::Spectrum<f64>;
pub type StabilityMap64 = stability::StabilityMap<f64>;

pub type PhysicalParams32 = params::PhysicalParams<f32>;
pub type ModelParams32 = params::ModelParams<f32>;
pub type MeanFieldState32 = meanfield::MeanFieldState<f32>;
pub type CovarianceState32 = linearized::CovarianceState<f32>;
