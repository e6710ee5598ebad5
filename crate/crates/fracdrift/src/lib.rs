//! Simulation and nonparametric drift estimation for martingale-driven
//! observation models `dZ_t = J0(t) d<M>_t + dM_t` and for fractional SDEs
//! reducible to that form.
//!
//! The crate is organized bottom-up:
//!
//! - [`grid`], [`qv`], [`quad`]: time grids, deterministic quadratic-variation
//!   models and quadrature against `d<M>_t` (singular densities included);
//! - [`basis`]: nested orthonormal function families with derivatives;
//! - [`simulate`]: exact-in-distribution samplers for the Molchan martingale,
//!   the observation process `Z`, fractional Brownian motion and the two
//!   finance models;
//! - [`estimator`]: the projection least-squares estimator, penalized model
//!   selection and integrated squared error evaluation;
//! - [`fracops`]: the singular kernel, the forward drift transform and its
//!   Abel-type inverse;
//! - [`apps`]: segmentation of long paths into pseudo-copies and the
//!   Black-Scholes / stochastic-volatility estimation pipelines.

pub mod apps;
pub mod basis;
pub mod error;
pub mod estimator;
pub mod fracops;
pub mod grid;
pub mod quad;
pub mod qv;
pub mod simulate;

pub use error::{Error, Result};
pub use grid::{Ensemble, SamplePath, TimeGrid};
pub use qv::QuadVarModel;
