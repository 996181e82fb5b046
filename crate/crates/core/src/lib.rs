//! Fully discrete implicit Euler / P1-Galerkin scheme for second-order
//! stochastic evolution equations with monotone nonlinear damping,
//!
//! ```text
//! dv + [A v + B u] dt = f dt + C(u, v) dW,   du = v dt,
//! ```
//!
//! on (0, 1) with Dirichlet boundary conditions, together with a harness
//! that checks the scheme's discrete energy identity, a priori bounds,
//! uniqueness and convergence by Monte Carlo.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod linalg;
pub mod mesh;
pub mod noise;
pub mod operators;
pub mod prolongation;
pub mod stepper;

pub use error::{Error, Result};
pub use mesh::{FemSpace, GalerkinVector, Mesh1D};
