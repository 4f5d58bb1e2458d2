//! Variable-order fractional `q(.)`-Laplacian problems in one space dimension:
//! variable-exponent function spaces, nonlocal energies, and solvers for the
//! mountain-pass and negative-energy critical points.

pub mod config;
pub mod energy;
pub mod expr;
pub mod fields;
pub mod grid;
pub mod kernel;
pub mod quadrature;
pub mod report;
pub mod solvers;
pub mod spaces;
