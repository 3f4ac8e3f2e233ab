//! Numerics for k-equivariant wave maps from 2+1 dimensional Minkowski space
//! into the sphere, reduced to the radial scalar psi(t, r).
//!
//! The crate provides the discretization (grids, quadrature, stencils), the
//! RK4 method-of-lines evolution for the nonlinear and linearized flows,
//! conserved-energy and Sobolev-type functionals, fits of bubble (harmonic
//! map) decompositions, and trajectory-level diagnostics that classify runs
//! into scattering, bubble blow-up, or global two-bubble behaviour.

pub mod analysis;
pub mod bubbles;
pub mod error;
pub mod evolve;
pub mod functionals;
pub mod grid;
pub mod snapshot;
pub mod state;

pub use error::{CoreError, Result};
pub use grid::{make_grid, Grading, RadialGrid};
pub use state::FieldState;
