//! Numerical laboratory for degenerate elliptic Bellman–Isaacs equations with
//! nonlinear Neumann-type boundary conditions.

pub mod boundary;
pub mod cli;
pub mod coeffs;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod linalg;
pub mod operators;
pub mod quadrature;
pub mod solver;
pub mod testfn;

pub use error::{Error, Result};
