//! Data-conforming LQR design.
//!
//! Identify a linear model from a single closed-loop trajectory, design
//! controllers whose closed-loop covariance stays close to the data through
//! semidefinite programs, and validate them in Monte Carlo campaigns on
//! linear and nonlinear plants.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod linalg;
pub mod lmi;
pub mod lqr;
pub mod regularizers;
pub mod sdp;
pub mod simulator;
pub mod sysid;

pub use error::{Error, Result};
