//! Graph Laplacians on singular manifolds: sampling, the Gaussian-kernel
//! operator, closed-form limits near boundaries, intersections and edges,
//! and the numerical experiments that check them.

// `!(x > 0.0)` is the NaN-rejecting form used throughout for argument checks
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod expr;
pub mod geometry;
pub mod numeric;
pub mod registry;

pub use error::{Error, Result};
pub mod operator;
pub mod theory;
pub mod analysis;
pub mod spectral;
