//! Special-regressor estimation of high-dimensional binary choice models.
//!
//! The pipeline is: screen candidate conditioning variables by distance
//! covariance ([`dcov`]), fit a cross-validated kernel conditional density of
//! the special regressor ([`density`]), form the transformed outcome
//! ([`transform`]), then estimate by SCAD-penalized least squares
//! ([`scad_ls`]) or SCAD-penalized GMM with instrument-validity selection
//! ([`scad_gmm`]). [`mc`] reproduces the simulation designs.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod data;
pub mod dcov;
pub mod density;
pub mod error;
pub mod kernel;
pub mod linalg;
pub mod mc;
pub mod optim;
pub mod probit;
pub mod rng;
pub mod scad;
pub mod scad_gmm;
pub mod scad_ls;
pub mod transform;

pub use data::{load_csv, make_folds, Column, DataTable, FoldAssignment, Role};
pub use error::{Error, Result};
pub use rng::SeedSpec;
