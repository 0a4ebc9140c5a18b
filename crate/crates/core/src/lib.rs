#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod covariance;
pub mod error;
pub mod moments;
pub mod noise;
pub mod quad;
pub mod rng;
pub mod solver;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};
