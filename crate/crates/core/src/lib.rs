//! Kronecker-factored preconditioning for two-layer representation learning.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod activation;
pub mod error;
pub mod harness;
pub mod kf;
pub mod linalg;
pub mod linrep;
pub mod model;
pub mod rmt;
pub mod rng;
pub mod single_index;
pub mod synth;

pub use error::{Error, Result};
