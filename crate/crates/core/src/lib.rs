//! Nonlinear Poisson–Boltzmann solves on a nested-interface reference domain
//! under analytic random domain maps, with Smolyak sparse-grid collocation on
//! Clenshaw–Curtis knots and closed-form analyticity-region estimates.

pub mod bounds;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod pde;
pub mod region;
pub mod smolyak;

pub use error::{Error, Result};
