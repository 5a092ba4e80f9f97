//! Numerical laboratory for the controlled refined stochastic wave system on box
//! domains.
//!
//! The crate covers the geometric control time and Carleman weights
//! ([`geometry`]), finite-difference grids and norms ([`discretization`]),
//! reproducible Brownian increments ([`noise`]), the forward and backward solvers
//! ([`forward`], [`adjoint`]), numerical checks of the weighted identity and
//! positivity bounds ([`carleman`]), and duality-based control synthesis
//! ([`control`]).

pub mod adjoint;
pub mod carleman;
pub mod coefficients;
pub mod config;
pub mod control;
pub mod discretization;
pub mod error;
pub mod forward;
pub mod geometry;
pub mod noise;
pub mod presets;

pub use error::{Error, Result};
