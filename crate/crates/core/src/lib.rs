//! Numerical laboratory for quadratic backward stochastic differential
//! equations
//!
//! ```text
//! Y_t = ξ + h(X) + ∫_t^T f(s, Y_s, Z_s) + g(X_{·∧s}, Y_s, Z_s) ds − ∫_t^T Z_s dW_s
//! ```
//!
//! driven by a forward diffusion `X`, with drivers of quadratic growth in `z`
//! that need not be convex.
//!
//! The crate is split along the pipeline:
//!
//! - [`engine`]: time grids, reproducible Brownian noise, Euler–Maruyama
//!   forward paths, tangent processes and path functionals.
//! - [`generators`]: drivers, terminal functionals, structural constants,
//!   the smooth `z`-truncation and sampling-based constant probes.
//! - [`solvers`]: regression Monte-Carlo with Picard iteration, an exact
//!   Bernoulli-tree oracle, Cole–Hopf and linear closed forms, and the two
//!   decomposition constructions.
//! - [`diagnostics`]: `Z`-growth ratios, exponential moments, stochastic
//!   exponentials, BMO proxies, reverse-Hölder exponents and pairwise
//!   uniqueness probes.
//! - [`harness`]: JSON experiment configs, the run pipeline and reports.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod engine;
mod error;
pub mod generators;
pub mod harness;
pub(crate) mod par;
pub mod solvers;

pub use error::{Error, Result};
