//! Simulation and verification toolkit for obliquely reflecting diffusions
//! in piecewise smooth domains.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coeffs;
pub mod cones;
pub mod controlled;
pub mod convergence;
pub mod error;
pub mod fixtures;
pub mod geometry;
pub mod kernel;
pub mod markov;
pub mod parallel;
pub mod resolvent;
pub mod rng;
pub mod scenario;
pub mod sder;
pub mod solvers;
pub mod stats;
pub mod testfn;
pub mod timechange;

pub use error::{Error, Result};
