//! Generalized Frechet means on metric spaces.
//!
//! The classical Frechet mean minimizes the average squared distance to the
//! data. Replacing the square by any convex, strictly increasing loss
//! `phi` with `phi(0) = 0` yields the phi-mean: the set of minimizers of
//!
//! ```text
//! F(x) = sum_j w_j * phi(rho(x, X_j)),
//! ```
//!
//! where `rho` is the distance of the underlying space. `phi(t) = t^2`
//! recovers the mean, `phi(t) = t` the geometric median, and faster-growing
//! losses interpolate toward circumcenter-like behavior.
//!
//! The crate provides:
//!
//! - [`phi`]: the loss family, growth constants, and their executable
//!   inequalities;
//! - [`spaces`]: concrete metric spaces (Euclidean, circle, torus, sphere,
//!   projective space) with exponential/logarithm maps and grids;
//! - [`loss`]: empirical losses, gradients, certified bounds, and the
//!   one-sided set distance used to compare mean sets;
//! - [`solvers`]: three interchangeable solvers behind a common trait with a
//!   name-based registry (certified nested grids, Riemannian gradient
//!   descent, tangent-space fixed-point iteration);
//! - [`sampling`]: reproducible samplers for rotation-symmetric laws;
//! - [`experiments`]: consistency curves, uniform consistency over loss
//!   families, uniqueness probes, and optimality residuals.
//!
//! All randomized code takes explicit 64-bit seeds and produces identical
//! results for identical inputs, independent of thread count.

pub mod error;
pub mod experiments;
pub mod loss;
pub mod phi;
pub mod sampling;
pub mod solvers;
pub mod spaces;

mod util;

pub use error::{Error, Result};
