//! Angular values of linear dynamical systems.
//!
//! The crate measures how fast subspaces rotate under iteration of a linear
//! map or a sequence of maps: principal angles between consecutive iterates
//! are averaged over time. Autonomous maps are handled exactly through a
//! spectral reduction to 2×2 normal forms; nonautonomous and random systems
//! through finite-horizon estimators.

pub mod autonomous;
pub mod error;
pub mod geometry;
pub mod io;
pub mod numeric;
pub mod random;
pub mod spectral;
pub mod theta2d;
pub mod trajectory;

pub use error::{Error, Result};
pub use geometry::{DenseMatrix, Frame};
