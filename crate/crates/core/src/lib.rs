#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod error_models;
pub mod estimator;
pub mod excitation;
pub mod numerics;
pub mod projection;
pub mod simulate;
pub mod tol;

pub use error::{Error, Result};
