//! Proximal mappings as differentiable network layers.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod catalog;
pub mod cca;
pub mod dropout;
pub mod error;
pub mod kernel;
pub mod linalg;
pub mod lstm;
pub mod optim;
pub mod rng;
pub mod tape;

pub use error::{Error, Result};
pub use linalg::Matrix;
