//! Piecewise-linear MIQP approximations of Gaussian-mixture chance
//! constraints P[ξᵀx ≤ b] ≥ θ, with instance generation, model export and
//! solution verification.

// `!(a < b)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod exec;
pub mod factory;
pub mod gmm;
pub mod json;
pub mod linalg;
pub mod model;
pub mod numfmt;
pub mod pwl;
pub mod special;
pub mod verify;

pub use error::{Error, Result};
pub use exec::Exec;
