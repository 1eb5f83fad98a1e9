//! Elastic registration of multivariate functional data whose component
//! functions carry spatially correlated phase.
//!
//! The crate provides the square-root-slope-function (SRSF) machinery for
//! grid-sampled functions and warping functions, a dynamic-programming
//! solver for pairwise elastic alignment (plain and penalized toward an
//! arbitrary phase target), multiple registration with template estimation,
//! componentwise and universal baselines, phase trace-variogram estimation
//! with kriging of warp SRSFs, the spatially penalized registration
//! algorithm built on top of these, simulation generators, and evaluation
//! metrics with cross-validation for the penalty parameter.

// Monotonicity checks are written as `!(b > a)` so that NaNs fail them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alignment;
pub mod error;
pub mod eval;
pub mod grid;
pub mod io;
pub mod pipeline;
pub mod registration;
pub mod simgen;
pub mod spatial;
pub mod spatial_registration;
pub mod srsf;
pub mod warp;

pub use error::{Error, Result};
pub use grid::{SampledFunction, TimeGrid};
pub use srsf::Srsf;
pub use warp::{Warp, WarpSrsf};
