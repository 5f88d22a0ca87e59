//! Dense matrices and a small define-by-run reverse-mode autodiff engine.
//!
//! A [`Graph`] is built fresh for every forward pass and owns all of its
//! node values. Parameters enter the graph as leaves; after
//! [`Graph::backward`] their gradients are read back by [`NodeId`].

mod graph;
mod matrix;

pub use graph::{binary_entropy, logistic, ElementwiseKind, Graph, NodeId, Squash, ENTROPY_CLAMP};
pub use matrix::Matrix;

/// Relative error used by every gradient comparison in this crate.
///
/// The denominator is floored at `1e-6` so that gradients which are zero up
/// to rounding are compared absolutely instead of blowing up.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}
