//! Shape-constrained Gaussian-process construction of yield, discount and survival curves.

pub mod curves;
pub mod datasets;
pub mod error;
pub mod estimation;
pub mod finite_model;
pub mod gp_linear;
pub mod instruments;
pub mod solver;
pub mod kernels;

pub use error::{Error, Result};
